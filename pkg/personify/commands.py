"""
The pipeline stages run from the command line. Each one reads the artifacts
of the previous stages from the output directory, writes its own there and
returns the exit status. Running a stage twice with the same inputs and
config rewrites the same bytes.

    fixture    users.jsonl, edges.csv, groups.txt
    ingest     validation.json
    enhance    profiles.jsonl (and the profile-cache.jsonl cache)
    embed      embeddings.bin, embeddings.txt
    build      hypergraph.tsv, hypergraph.weights.json
    train      checkpoint.bin, history.jsonl, split.json
    eval       report.json, report.csv
    ablate     ablation.json, ablation.csv
    sweep      sweep.json, sweep.csv
    stats      stats.json, stats-distribution.csv, stats-followers.csv,
               stats-group-sizes.csv, stats-followers-logbinned.csv,
               stats-group-sizes-logbinned.csv
    gradcheck  gradcheck.json
"""

import os
import logging
import dataclasses
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from personify import PersonifyError, Provenance, find_module
from personify.config import Config, ConfigError, split_list
from personify.envgen import HyperedgeSpec, Similarity, assemble, parse_kinds
from personify.ingest import DatasetBundle, load_dataset, strip_labels, \
    validate
from personify.model import EdgeFamily, FeatureMatrix, Scheme
from personify.enhance import (CLIENTS, build_prompt, enhance_profiles,
                               initialize_client)
from personify.enhance.cache import ProfileCache
from personify.enhance.embed import EmbedderKind, EmbedderSpec, embed
from personify.enhance.raw import raw_feature_matrix
from personify.evaluation import (DEFAULT_FRACTIONS, SUMMARY_HEADER,
                                  ExperimentData, FeatureSource,
                                  SplitAssignment, ablate_hyperedges,
                                  label_ratio_sweep, labeled_ids, metrics,
                                  run_experiment, split, table_rows)
from personify.hgnn import Activation, TrainConfig
from personify.hgnn.checkpoint import (load_checkpoint, save_checkpoint,
                                       save_history)
from personify.hgnn.network import init_params
from personify.hgnn.train import grad_check, predict, train
from personify.stats import (StatsError, StatsReport, crosstab, distribution,
                             frequency_points, log_binned, powerlaw_fit)
from personify.store import (hypergraph_header, load_embeddings,
                             load_hypergraph, load_profiles, read_json,
                             require, save_embeddings,
                             save_hypergraph, save_profiles, write_csv,
                             write_json)
from personify.synthetic import planted_dataset, write_planted


# Gradient checks above this relative error make `gradcheck` fail.
GRAD_TOLERANCE = 1e-4
# Largest sub-hypergraph used by `gradcheck`.
GRAD_CHECK_NODES = 30
GRAD_CHECK_EXIT = 2


def provenance(config: Config) -> Provenance:
    return Provenance(config.digest(), config.seed)


def artifact(config: Config, name: str) -> str:
    return os.path.join(config.out, name)


def _dataset_path(config: Config, option: str, name: str,
                  required: bool) -> Optional[str]:
    """
    The path in the option, or the file written by `fixture` to the output
    directory when the option isn't set.
    """

    path = getattr(config, option)
    if path is not None:
        return path
    fallback = artifact(config, name)
    if os.path.exists(fallback):
        return fallback
    if required:
        raise ConfigError(f"No {option} was given. Set it with"
                          f" --{option.replace('_path', '')} or in the Data"
                          f" section, or run fixture first")
    return None


def load_bundle(config: Config) -> DatasetBundle:
    return load_dataset(
        _dataset_path(config, 'users_path', 'users.jsonl', True),
        _dataset_path(config, 'edges_path', 'edges.csv', False),
        _dataset_path(config, 'groups_path', 'groups.txt', False))


def hyperedge_spec(config: Config) -> HyperedgeSpec:
    try:
        similarity = Similarity[config.similarity.upper()]
    except KeyError:
        raise ConfigError(f"Unknown similarity '{config.similarity}', use"
                          f" COSINE or EUCLIDEAN")
    return HyperedgeSpec(kinds=parse_kinds(config.kinds),
                         k_hop=config.k_hop,
                         knn_k=config.knn_k,
                         similarity=similarity,
                         node_weight=config.node_weight,
                         edge_weight=config.edge_weight)


def train_config(config: Config) -> TrainConfig:
    try:
        activation = Activation[config.activation.upper()]
    except KeyError:
        raise ConfigError(f"Unknown activation '{config.activation}', use"
                          f" RELU or IDENTITY")
    return TrainConfig(learning_rate=config.learning_rate,
                       weight_decay=config.weight_decay,
                       max_epochs=config.max_epochs,
                       layers=config.layers,
                       hidden_dim=config.hidden_dim,
                       gamma=config.gamma,
                       seed=config.seed,
                       bn_momentum=config.bn_momentum,
                       patience=config.patience,
                       activation=activation,
                       batch_norm=config.batch_norm)


def embedder_spec(config: Config) -> EmbedderSpec:
    try:
        kind = EmbedderKind[config.embedder.upper()]
    except KeyError:
        raise ConfigError(f"Unknown embedder '{config.embedder}', use"
                          f" EXTERNAL or HASH")
    return EmbedderSpec(kind=kind, dim=config.embed_dim,
                        endpoint=config.embed_endpoint,
                        model=config.embed_model,
                        token_env=config.llm_token_env,
                        timeout=config.llm_timeout)


def feature_source(config: Config) -> FeatureSource:
    try:
        return FeatureSource[config.feature_source.upper()]
    except KeyError:
        raise ConfigError(f"Unknown feature source '{config.feature_source}',"
                          f" use ENHANCED or RAW")


def node_features(config: Config, bundle: DatasetBundle,
                  source: FeatureSource) -> FeatureMatrix:
    if source == FeatureSource.RAW:
        return raw_feature_matrix(bundle)

    features = load_embeddings(require(artifact(config, 'embeddings.bin'),
                                       'embed'))
    if features.shape[0] != bundle.num_users:
        raise PersonifyError(f"The embeddings have {features.shape[0]} rows"
                             f" for {bundle.num_users} users, run enhance"
                             f" and embed again")
    return features


def experiment_data(config: Config, bundle: DatasetBundle,
                    source: FeatureSource) -> ExperimentData:
    return ExperimentData(
        bundle=bundle,
        scheme=Scheme.from_name(config.scheme),
        features={source: node_features(config, bundle, source)})


def cmd_fixture(config: Config) -> int:
    paths = write_planted(planted_dataset(seed=config.seed), config.out)
    logging.info("Wrote the planted dataset to %s", config.out)
    for name, path in paths.items():
        logging.debug("%s: %s", name, path)
    return 0


def cmd_ingest(config: Config) -> int:
    report = validate(load_bundle(config))
    path = artifact(config, 'validation.json')
    write_json(path, report.to_dict(), provenance(config))
    logging.info("%d users, %d edges and %d groups, %d isolated users."
                 " Report written to %s", report.num_users, report.num_edges,
                 report.num_groups, len(report.isolated_nodes), path)
    return 0


def cmd_enhance(config: Config) -> int:
    # The labels are removed before anything reaches a prompt.
    bundle = strip_labels(load_bundle(config))
    prompts = [build_prompt(user) for user in bundle.users]

    client_data = find_module(CLIENTS, config.llm_client)
    if not client_data.installed:
        raise PersonifyError(f"The {client_data.short_name} client isn't"
                             f" installed")
    client = initialize_client(client_data, config)
    cache = ProfileCache(artifact(config, 'profile-cache.jsonl'))
    profiles = enhance_profiles(
        client, prompts, cache,
        max_inflight=config.llm_max_inflight,
        retries=config.llm_retries,
        backoff=config.llm_backoff,
        temperature=config.llm_temperature)
    save_profiles(artifact(config, 'profiles.jsonl'), profiles,
                  provenance(config))
    return 0


def cmd_embed(config: Config) -> int:
    profiles = load_profiles(require(artifact(config, 'profiles.jsonl'),
                                     'enhance'))
    profiles.sort(key=lambda p: p.user_id)
    spec = embedder_spec(config)
    matrix = embed(spec, [p.narrative for p in profiles])
    save_embeddings(artifact(config, 'embeddings.bin'), matrix,
                    provenance(config), spec.kind.name)
    logging.info("Embedded %d narratives into %d dimensions", *matrix.shape)
    return 0


def cmd_build(config: Config) -> int:
    bundle = load_bundle(config)
    spec = hyperedge_spec(config)
    features = None
    if EdgeFamily.SEM in spec.kinds:
        features = node_features(config, bundle, feature_source(config))
    graph = assemble(spec, bundle, features)
    save_hypergraph(artifact(config, 'hypergraph.tsv'), graph,
                    provenance(config), spec.name)
    sizes = graph.family_sizes()
    logging.info("Hypergraph %s: %d nodes, %s", spec.name, graph.num_nodes,
                 ', '.join(f"{sizes[k]} {k.name}" for k in EdgeFamily))
    return 0


def _labels_array(bundle: DatasetBundle, scheme: Scheme) -> np.ndarray:
    return np.array([-1 if label is None else label
                     for label in bundle.labels(scheme)], dtype=np.int64)


def cmd_train(config: Config) -> int:
    bundle = load_bundle(config)
    graph = load_hypergraph(require(artifact(config, 'hypergraph.tsv'),
                                    'build'))
    source = feature_source(config)
    features = node_features(config, bundle, source)
    scheme = Scheme.from_name(config.scheme)
    labels = bundle.labels(scheme)
    assignment = split(labeled_ids(bundle, scheme), seed=config.seed)

    tc = train_config(config)
    result = train(graph, features, labels, assignment.train, assignment.val,
                   scheme.num_classes, tc)
    prov = provenance(config)
    save_checkpoint(artifact(config, 'checkpoint.bin'), result.params, tc,
                    prov, scheme=scheme.name, feature_source=source.name,
                    best_epoch=result.best_epoch,
                    best_val_accuracy=result.best_val_accuracy)
    save_history(artifact(config, 'history.jsonl'), result.history, prov)
    write_json(artifact(config, 'split.json'), assignment.to_dict(), prov)
    return 0


def cmd_eval(config: Config) -> int:
    """
    Test metrics of the trained checkpoint, plus the repeated experiment
    with fresh splits and initializations for the mean and deviation.
    """

    params, tc, header = load_checkpoint(
        require(artifact(config, 'checkpoint.bin'), 'train'))
    split_data = read_json(require(artifact(config, 'split.json'), 'train'))
    bundle = load_bundle(config)
    graph = load_hypergraph(require(artifact(config, 'hypergraph.tsv'),
                                    'build'))
    scheme = Scheme[header['scheme']]
    source = FeatureSource[header['feature_source']]
    features = node_features(config, bundle, source)

    assignment = SplitAssignment(tuple(split_data['train']),
                                 tuple(split_data['val']),
                                 tuple(split_data['test']))
    test = np.array(assignment.test)
    probs = predict(graph, features, params, tc)
    checkpoint_report = metrics(probs[test],
                                _labels_array(bundle, scheme)[test])

    # The repetitions use the built hypergraph too, not one rebuilt from
    # the current options.
    graph_header = hypergraph_header(artifact(config, 'hypergraph.tsv'))
    spec = dataclasses.replace(hyperedge_spec(config),
                               kinds=parse_kinds(graph_header['kinds']))
    data = ExperimentData(bundle, scheme, {source: features})
    repeated = run_experiment(data, source, spec, train_config(config),
                              config.n_reps, graph=graph)

    prov = provenance(config)
    write_json(artifact(config, 'report.json'), {
        'scheme': scheme.name,
        'feature_source': source.name,
        'kinds': spec.name,
        'checkpoint': checkpoint_report.to_dict(),
        'experiment': repeated.to_dict()
    }, prov)
    write_csv(artifact(config, 'report.csv'), ['run'] + SUMMARY_HEADER,
              [['checkpoint'] + checkpoint_report.summary_row(),
               [f'{spec.name} x{config.n_reps}'] + repeated.summary_row()],
              prov)
    logging.info("Checkpoint test accuracy %.4f, repeated %.4f +- %.4f",
                 checkpoint_report.accuracy, repeated.mean['accuracy'],
                 repeated.std['accuracy'])
    return 0


def _write_table(config: Config, name: str, rows) -> None:
    prov = provenance(config)
    write_json(artifact(config, f'{name}.json'),
               {'rows': [row.to_dict() for row in rows]}, prov)
    write_csv(artifact(config, f'{name}.csv'), ['name'] + SUMMARY_HEADER,
              table_rows(rows), prov)


def cmd_ablate(config: Config) -> int:
    bundle = load_bundle(config)
    source = feature_source(config)
    rows = ablate_hyperedges(experiment_data(config, bundle, source), source,
                             hyperedge_spec(config), train_config(config),
                             config.n_reps)
    _write_table(config, 'ablation', rows)
    for row in rows:
        logging.info("%-12s accuracy %.4f +- %.4f", row.name,
                     row.report.mean['accuracy'], row.report.std['accuracy'])
    return 0


def parse_fractions(raw: str) -> Tuple[float, ...]:
    try:
        fractions = tuple(float(item) for item in split_list(raw))
    except ValueError:
        raise ConfigError(f"Invalid fractions '{raw}', use numbers separated"
                          f" by commas")
    return fractions or DEFAULT_FRACTIONS


def cmd_sweep(config: Config) -> int:
    bundle = load_bundle(config)
    source = feature_source(config)
    rows = label_ratio_sweep(experiment_data(config, bundle, source), source,
                             hyperedge_spec(config), train_config(config),
                             parse_fractions(config.fractions), config.n_reps)
    _write_table(config, 'sweep', rows)
    return 0


def _fit_or_skip(report: StatsReport, name: str, values: List[int]) -> None:
    try:
        report.powerlaws[name] = powerlaw_fit(values)
    except StatsError as e:
        logging.warning("Skipping the power-law fit of %s: %s", name, str(e))
        report.powerlaws[name] = None
        report.skipped[f'powerlaw:{name}'] = str(e)


def cmd_stats(config: Config) -> int:
    bundle = load_bundle(config)
    users = bundle.users
    report = StatsReport()

    for scheme in Scheme:
        try:
            report.distributions[scheme.name] = distribution(users, scheme)
        except StatsError as e:
            report.skipped[f'distribution:{scheme.name}'] = str(e)

    for pair in split_list(config.crosstabs):
        axes = pair.split(':')
        if len(axes) != 2:
            raise ConfigError(f"Invalid crosstab '{pair}', use axis:axis")
        report.crosstabs.append(crosstab(users, axes[0], axes[1],
                                         list(bundle.group_index)))

    followers = [user.follower_count for user in users]
    group_sizes = [len(members) for members in bundle.group_index.values()]
    _fit_or_skip(report, 'followers', followers)
    _fit_or_skip(report, 'group_sizes', group_sizes)

    prov = provenance(config)
    write_json(artifact(config, 'stats.json'), report.to_dict(), prov)
    write_csv(artifact(config, 'stats-distribution.csv'),
              ['scheme', 'type', 'count', 'proportion'],
              [[name, row.type_name, row.count, row.proportion]
               for name, rows in report.distributions.items()
               for row in rows], prov)
    for name, values in (('followers', followers),
                         ('group-sizes', group_sizes)):
        write_csv(artifact(config, f'stats-{name}.csv'),
                  ['x', 'count', 'ccdf'], frequency_points(values), prov)
        write_csv(artifact(config, f'stats-{name}-logbinned.csv'),
                  ['center', 'count', 'density'], log_binned(values), prov)
    return 0


def cmd_gradcheck(config: Config) -> int:
    """
    Checks the gradients of a freshly initialized model on the sub-hypergraph
    induced by the first labeled users, with at most `GRAD_CHECK_NODES`
    nodes.
    """

    bundle = load_bundle(config)
    graph = load_hypergraph(require(artifact(config, 'hypergraph.tsv'),
                                    'build'))
    scheme = Scheme.from_name(config.scheme)
    features = node_features(config, bundle, feature_source(config))
    labels = _labels_array(bundle, scheme)

    nodes = labeled_ids(bundle, scheme)[:GRAD_CHECK_NODES]
    if not nodes:
        raise PersonifyError(f"No user has a {scheme.name} label")
    tc = train_config(config)
    params = init_params(features.shape[1], scheme.num_classes, tc)
    error = grad_check(graph.subgraph(nodes), features[nodes], labels[nodes],
                       params, tc, eps=config.grad_eps, seed=config.seed)

    passed = bool(error <= GRAD_TOLERANCE)
    write_json(artifact(config, 'gradcheck.json'), {
        'max_relative_error': error,
        'tolerance': GRAD_TOLERANCE,
        'num_nodes': len(nodes),
        'passed': passed
    }, provenance(config))
    if not passed:
        logging.error("The gradient check failed: relative error %.3e above"
                      " %.0e", error, GRAD_TOLERANCE)
        return GRAD_CHECK_EXIT
    return 0


COMMAND_FUNCTIONS: Dict[str, Callable[[Config], int]] = {
    'fixture': cmd_fixture,
    'ingest': cmd_ingest,
    'enhance': cmd_enhance,
    'embed': cmd_embed,
    'build': cmd_build,
    'train': cmd_train,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
    'sweep': cmd_sweep,
    'stats': cmd_stats,
    'gradcheck': cmd_gradcheck
}


def run_command(config: Config) -> int:
    logging.info("Running %s (config hash %s, seed %d)", config.command,
                 config.digest(), config.seed)
    return COMMAND_FUNCTIONS[config.command](config)
