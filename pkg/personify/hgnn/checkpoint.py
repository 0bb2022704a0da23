"""
Model checkpoints and training histories on disk.
"""

from typing import Any, Dict, List, Sequence, Tuple

from personify import Provenance
from personify.store import (ArtifactFormatError, read_blocks, read_jsonl,
                             write_blocks, write_jsonl)
from personify.hgnn import Activation, TrainConfig
from personify.hgnn.network import ModelParams
from personify.hgnn.train import EpochRecord


CHECKPOINT_MAGIC = b'PERSONIFY-CHECKPOINT 1\n'
BUFFER_PREFIX = 'buffer:'


def config_to_dict(config: TrainConfig) -> Dict[str, Any]:
    return {
        'learning_rate': config.learning_rate,
        'weight_decay': config.weight_decay,
        'max_epochs': config.max_epochs,
        'layers': config.layers,
        'hidden_dim': config.hidden_dim,
        'gamma': config.gamma,
        'seed': config.seed,
        'bn_momentum': config.bn_momentum,
        'patience': config.patience,
        'activation': config.activation.name,
        'batch_norm': config.batch_norm,
        'bn_eps': config.bn_eps,
        'betas': list(config.betas),
        'adam_eps': config.adam_eps
    }


def config_from_dict(data: Dict[str, Any]) -> TrainConfig:
    data = dict(data)
    data['activation'] = Activation[data['activation']]
    data['betas'] = tuple(data['betas'])
    return TrainConfig(**data)


def save_checkpoint(path: str, params: ModelParams, config: TrainConfig,
                    provenance: Provenance, **extra: Any) -> None:
    """
    Trainable arrays first, in creation order, then the running statistics
    prefixed with "buffer:". Extra keyword arguments go to the header.
    """

    blocks = dict(params.weights)
    for name, buffer in params.buffers.items():
        blocks[BUFFER_PREFIX + name] = buffer
    header = dict(extra)
    header['provenance'] = provenance.as_dict()
    header['train_config'] = config_to_dict(config)
    write_blocks(path, CHECKPOINT_MAGIC, header, blocks)


def load_checkpoint(path: str
                    ) -> Tuple[ModelParams, TrainConfig, Dict[str, Any]]:
    """
    Returns the parameters, the training configuration and the whole header.
    """

    header, blocks = read_blocks(path, CHECKPOINT_MAGIC)
    if 'train_config' not in header:
        raise ArtifactFormatError(f"{path} has no training configuration")
    params = ModelParams()
    for name, block in blocks.items():
        if name.startswith(BUFFER_PREFIX):
            params.buffers[name[len(BUFFER_PREFIX):]] = block
        else:
            params.weights[name] = block
    return params, config_from_dict(header['train_config']), header


def save_history(path: str, history: Sequence[EpochRecord],
                 provenance: Provenance) -> None:
    write_jsonl(path, ({'epoch': r.epoch, 'train_loss': r.train_loss,
                        'val_accuracy': r.val_accuracy} for r in history),
                provenance)


def load_history(path: str) -> List[EpochRecord]:
    _, records = read_jsonl(path)
    return [EpochRecord(r['epoch'], r['train_loss'], r['val_accuracy'])
            for r in records]
