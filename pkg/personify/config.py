"""
The run configuration. Each option is looked up in these places, the first
one that has it wins:
    * values assigned on the Config instance (like --offline overrides)
    * command line flags
    * the INI config file
    * the defaults in `OPTIONS`

Secrets are never options. The LLM token is read from the environment
variable named by `llm_token_env`.
"""

import os
import json
import argparse
import configparser
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from appdirs import AppDirs

from personify import PersonifyError, stable_hash
from personify.version import __version__


# Used when no --config is given. It may not exist.
APP_DIRS = AppDirs("personify", "personify")
DEFAULT_PATH = os.path.join(APP_DIRS.user_config_dir, "config.ini")

# The pipeline stages, in the order they're usually run.
COMMANDS = ('fixture', 'ingest', 'enhance', 'embed', 'build', 'train', 'eval',
            'ablate', 'sweep', 'stats', 'gradcheck')

# Options that don't change the results, left out of the config hash.
UNHASHED = ('debug', 'config_file', 'out', 'seed')

OptionValue = Optional[Union[bool, int, float, str]]


class ConfigError(PersonifyError, ValueError):
    pass


@dataclass
class Option:
    # Help text, ending with a period.
    description: str
    # bool, int, float or str, for both the flag and the INI value.
    type: type
    default: Any


@dataclass
class Argument(Option):
    # The argparse action: 'store', 'store_true' or 'store_false'.
    arg_action: str
    # Arguments that the option can take, like ("-c", "--config").
    args: Tuple[str, ...]


@dataclass
class ConfigOption(Option):
    # The section in the config file, like 'Defaults'.
    section: str


@dataclass
class FullOption(Argument, ConfigOption):
    pass


def _full(description: str, type: type, default: Any, section: str,
          *args: str, action: str = 'store') -> FullOption:
    return FullOption(description=description, type=type, default=default,
                      args=args, arg_action=action, section=section)


OPTIONS = {
    'debug': _full("display debug messages.", bool, False, 'Defaults',
                   '--debug', action='store_true'),

    # Command line only, the file can't point to another file.
    'config_file': Argument(
        description="the config file path.",
        type=str,
        default=DEFAULT_PATH,
        args=('-c', '--config'),
        arg_action='store'),

    'seed': _full("seed of the splits, initializations and generators.",
                  int, 0, 'Defaults', '--seed'),
    'out': _full("directory where the artifacts are read and written.", str,
                 'personify-out', 'Defaults', '-o', '--out'),
    # Forces the mock client and the hash embedder, so that nothing is sent
    # over the network.
    'offline': _full("run without network access, with the mock language"
                     " model and the hashing embedder.", bool, False,
                     'Defaults', '--offline', action='store_true'),
    'scheme': _full("personality scheme to classify: MBTI or ENNEAGRAM.", str,
                    'MBTI', 'Defaults', '--scheme'),
    'feature_source': _full("node features used for training: ENHANCED"
                            " (embedded narratives) or RAW (attributes).",
                            str, 'ENHANCED', 'Defaults', '--features'),

    'users_path': _full("the users file, one JSON object per line.", str,
                        None, 'Data', '--users'),
    'edges_path': _full("the interactions file, CSV with src,dst,kind.", str,
                        None, 'Data', '--edges'),
    'groups_path': _full("optional catalogue of group names, one per line.",
                         str, None, 'Data', '--groups'),

    'kinds': _full("hyperedge families, like TOP,SEM,FOR.", str,
                   'TOP,SEM,FOR', 'Hypergraph', '--kinds'),
    'k_hop': _full("hops of the topological neighbourhoods.", int, 2,
                   'Hypergraph', '--k-hop'),
    'knn_k': _full("neighbours of the semantic hyperedges.", int, 10,
                   'Hypergraph', '--knn-k'),
    'similarity': _full("similarity of the semantic hyperedges: COSINE or"
                        " EUCLIDEAN.", str, 'COSINE', 'Hypergraph',
                        '--similarity'),
    'node_weight': _full("weight of every node.", float, 1.0, 'Hypergraph',
                         '--node-weight'),
    'edge_weight': _full("weight of every hyperedge.", float, 1.0,
                         'Hypergraph', '--edge-weight'),

    'embedder': _full("text embedder: EXTERNAL (embedding service) or HASH"
                      " (local feature hashing).", str, 'EXTERNAL',
                      'Embedding', '--embedder'),
    'embed_dim': _full("dimension of the embeddings.", int, 384, 'Embedding',
                       '--embed-dim'),
    'embed_endpoint': _full("URL of the embedding service.", str, None,
                            'Embedding', '--embed-endpoint'),
    'embed_model': _full("model name sent to the embedding service.", str,
                         'all-MiniLM-L6-v2', 'Embedding', '--embed-model'),

    'llm_client': _full("language model client: CHAT_COMPLETION or MOCK.",
                        str, 'CHAT_COMPLETION', 'LLM', '--llm-client'),
    'llm_base_url': _full("base URL of the chat-completion API.", str,
                          'https://api.openai.com/v1', 'LLM',
                          '--llm-base-url'),
    'llm_model': _full("language model name.", str, 'gpt-3.5-turbo', 'LLM',
                       '--llm-model'),
    'llm_token_env': _full("name of the environment variable holding the API"
                           " token.", str, 'PERSONIFY_LLM_TOKEN', 'LLM',
                           '--llm-token-env'),
    'llm_temperature': _full("sampling temperature.", float, 0.0, 'LLM',
                             '--llm-temperature'),
    'llm_max_inflight': _full("maximum number of concurrent requests.", int,
                              4, 'LLM', '--llm-max-inflight'),
    'llm_retries': _full("retries of a failed request.", int, 3, 'LLM',
                         '--llm-retries'),
    'llm_backoff': _full("initial retry delay in seconds, doubled on each"
                         " retry.", float, 1.0, 'LLM', '--llm-backoff'),
    'llm_timeout': _full("request timeout in seconds.", float, 60.0, 'LLM',
                         '--llm-timeout'),

    'learning_rate': _full("Adam learning rate.", float, 0.001, 'Train',
                           '--learning-rate'),
    'weight_decay': _full("L2 penalty added to the gradients.", float, 5e-4,
                          'Train', '--weight-decay'),
    'max_epochs': _full("maximum number of training epochs.", int, 500,
                        'Train', '--max-epochs'),
    'layers': _full("number of hypergraph layers.", int, 2, 'Train',
                    '--layers'),
    'hidden_dim': _full("width of the hidden layers.", int, 128, 'Train',
                        '--hidden-dim'),
    'gamma': _full("focusing parameter of the focal loss.", float, 2.0,
                   'Train', '--gamma'),
    'bn_momentum': _full("weight of the old running statistics of batch"
                         " normalization.", float, 0.9, 'Train',
                         '--bn-momentum'),
    'patience': _full("epochs without improvement before stopping, 0 to"
                      " never stop early.", int, 100, 'Train', '--patience'),
    'activation': _full("outer activation of the layers: RELU or IDENTITY.",
                        str, 'RELU', 'Train', '--activation'),
    # Negated for the argument parser, it has to be set to false in the config
    # file to be equivalent.
    'batch_norm': _full("disable batch normalization.", bool, True, 'Train',
                        '--no-batch-norm', action='store_false'),

    'n_reps': _full("repetitions of each experiment.", int, 5, 'Eval',
                    '--n-reps'),
    'fractions': _full("training fractions of the label ratio sweep.", str,
                       '0.1,0.25,0.5,0.75,1.0', 'Eval', '--fractions'),
    'grad_eps': _full("finite-difference step of the gradient check.", float,
                      1e-5, 'Eval', '--grad-eps'),

    'crosstabs': _full("axis pairs for the cross-tabulations, like"
                       " mbti:gender,mbti:enneagram.", str,
                       'mbti:enneagram,mbti:gender,mbti:groups,'
                       'mbti_t2:followers_quartile,'
                       'mbti_t3:followers_quartile', 'Stats', '--crosstabs')
}


class Config:
    """
    Resolves every entry of `OPTIONS` from the command line, the INI file and
    the defaults. Attribute access returns the resolved value, so a stage can
    read `config.knn_k` without knowing where it was set.
    """

    def __init__(self) -> None:
        self._argparser = argparse.ArgumentParser(
            prog="personify",
            description="Personality classification of social network users"
            " with hypergraphs of their social environments. Every option"
            " can also be set in the config file, see example.ini.")
        self._register_arguments()

        self._file = configparser.ConfigParser()
        self._args: Optional[argparse.Namespace] = None
        self._path: Optional[str] = None

    def _register_arguments(self) -> None:
        """
        Every flag stores None when it's absent, so that `__getattr__` can
        tell an omitted flag apart from one set to its default.
        """

        self._argparser.add_argument(
            "-v", "--version", action="version",
            version=f"%(prog)s {__version__}",
            help="show the version and exit")
        self._argparser.add_argument(
            "command", choices=COMMANDS, help="the pipeline stage to run.")

        for name, option in OPTIONS.items():
            if not isinstance(option, Argument):
                continue

            # Negated flags show the value they switch to.
            shown = not option.default if option.arg_action == 'store_false' \
                else option.default
            kwargs: Dict[str, Any] = {
                'action': option.arg_action,
                'dest': name,
                'default': None,
                'help': f"{option.description} Default is '{shown}'."
            }
            if option.arg_action == 'store':
                kwargs['type'] = option.type
            self._argparser.add_argument(*option.args, **kwargs)

    @property
    def command(self) -> Optional[str]:
        return None if self._args is None else self._args.command

    @property
    def path(self) -> Optional[str]:
        return self._path

    def read_file(self, attr: str) -> OptionValue:
        """
        Typed value of `attr` in the INI file, or None when it's left blank.
        Raises the configparser lookup errors when the key or its section are
        missing.
        """

        option = OPTIONS[attr]
        raw = self._file.get(option.section, attr)
        if raw.strip() == '':
            return None

        getters = {
            bool: self._file.getboolean,
            int: self._file.getint,
            float: self._file.getfloat
        }
        getter = getters.get(option.type, self._file.get)
        try:
            return getter(option.section, attr)
        except ValueError as e:
            raise ConfigError(f"Error when parsing the config file: in the"
                              f" {option.section} section, {attr} doesn't"
                              f" have a valid type ({e}).")

    def parse(self, argv: Optional[Sequence[str]] = None,
              config_file: Optional[str] = None) -> None:
        """
        Parses `argv` (the process arguments when None) and loads the INI
        file named by `config_file`, by --config or by `DEFAULT_PATH`, in that
        order. Only the default file may be missing.
        """

        self._args = self._argparser.parse_args(argv)
        explicit = config_file or self._args.config_file
        self._path = explicit or DEFAULT_PATH
        self._file = configparser.ConfigParser()

        if not os.path.exists(self._path):
            if explicit is not None:
                raise ConfigError(f"The config file {self._path} doesn't"
                                  f" exist")
            return

        try:
            self._file.read(self._path, encoding='utf-8')
        except configparser.Error as e:
            raise ConfigError(f"Error when parsing the config file"
                              f" {self._path}: {e}")

    def __getattr__(self, attr: str) -> OptionValue:
        """
        Flag, then config file, then default. Values assigned on the instance
        never reach this method, which gives them the highest priority.
        """

        if attr.startswith('_'):
            raise AttributeError(attr)
        try:
            option = OPTIONS[attr]
        except KeyError:
            raise AttributeError(f"Unknown option '{attr}'")

        if isinstance(option, Argument) and self._args is not None:
            flag = getattr(self._args, attr)
            if flag is not None:
                return flag

        if isinstance(option, ConfigOption):
            try:
                stored = self.read_file(attr)
            except (configparser.NoOptionError, configparser.NoSectionError):
                stored = None
            if stored is not None:
                return stored

        return option.default

    def resolved(self) -> Dict[str, OptionValue]:
        return {name: getattr(self, name) for name in OPTIONS}

    def digest(self) -> str:
        """
        Stable hash of every option that can change the results.
        """

        options = {name: value for name, value in self.resolved().items()
                   if name not in UNHASHED}
        return stable_hash(json.dumps(options, sort_keys=True))


def split_list(raw: str) -> List[str]:
    return [item.strip() for item in raw.split(',') if item.strip()]
