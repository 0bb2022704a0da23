"""
On-disk formats of the artifacts passed between the pipeline stages. Every
file embeds the provenance of the run that produced it, and writing the same
content twice produces the same bytes:
    * JSON documents with sorted keys, and JSON lines for the profiles and
      the training history.
    * CSV tables, after a `#` comment line with the provenance.
    * Numeric arrays (embeddings, checkpoints) in a small binary format: a
      magic line, a JSON header line with the block names and shapes, and
      then the blocks as raw little-endian 64-bit floats in row-major order.
    * The hypergraph as a tab separated hyperedge list plus a JSON sidecar
      with the weights.
"""

import os
import csv
import json
import dataclasses
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from personify import PersonifyError, Provenance
from personify.model import EdgeFamily, Hyperedge, Hypergraph
from personify.enhance import EnhancedProfile


FLOAT_DTYPE = '<f8'
EMBEDDINGS_MAGIC = b'PERSONIFY-EMBEDDINGS 1\n'


class MissingArtifactError(PersonifyError, FileNotFoundError):
    """
    Raised when a stage needs the output of a previous one that hasn't been
    run yet. The message names the command that produces it.
    """

    def __init__(self, path: str, command: str) -> None:
        super().__init__(f"{path} doesn't exist, run {command} first")
        self.path = path
        self.command = command


class ArtifactFormatError(PersonifyError, ValueError):
    pass


def require(path: str, command: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifactError(path, command)
    return path


def _prepare(path: str) -> None:
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)


def _dumps(obj: Any, **kwargs) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, **kwargs)


def write_json(path: str, content: Mapping[str, Any],
               provenance: Provenance) -> None:
    _prepare(path)
    document = dict(content)
    document['provenance'] = provenance.as_dict()
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_dumps(document, indent=2) + '\n')


def read_json(path: str) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.decoder.JSONDecodeError as e:
            raise ArtifactFormatError(f"{path} isn't valid JSON: {e}")


def write_csv(path: str, header: Sequence[str],
              rows: Iterable[Sequence[Any]], provenance: Provenance) -> None:
    _prepare(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(f"# config_hash={provenance.config_hash}"
                f" seed={provenance.seed} version={provenance.version}\n")
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        lines = [line for line in f if not line.startswith('#')]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def write_jsonl(path: str, records: Iterable[Mapping[str, Any]],
                provenance: Provenance) -> None:
    """
    The first line holds the provenance, the rest one record each.
    """

    _prepare(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_dumps({'provenance': provenance.as_dict()}) + '\n')
        for record in records:
            f.write(_dumps(record) + '\n')


def read_jsonl(path: str) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    records = []
    provenance: Dict[str, Any] = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if line.strip() == '':
                continue
            try:
                record = json.loads(line)
            except json.decoder.JSONDecodeError as e:
                raise ArtifactFormatError(f"{path}, line {line_no}: {e}")
            if line_no == 1 and set(record) == {'provenance'}:
                provenance = record['provenance']
            else:
                records.append(record)
    return provenance, records


def write_blocks(path: str, magic: bytes, header: Mapping[str, Any],
                 blocks: Mapping[str, np.ndarray]) -> None:
    _prepare(path)
    table = [{'name': name, 'shape': list(block.shape)}
             for name, block in blocks.items()]
    meta = dict(header)
    meta['blocks'] = table
    meta['dtype'] = FLOAT_DTYPE
    with open(path, 'wb') as f:
        f.write(magic)
        f.write(_dumps(meta).encode('utf-8') + b'\n')
        for block in blocks.values():
            f.write(np.ascontiguousarray(block, dtype=FLOAT_DTYPE).tobytes())


def read_blocks(path: str, magic: bytes
                ) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    with open(path, 'rb') as f:
        if f.readline() != magic:
            raise ArtifactFormatError(f"{path} isn't a"
                                      f" {magic.decode().strip()} file")
        try:
            meta = json.loads(f.readline().decode('utf-8'))
        except (UnicodeDecodeError, json.decoder.JSONDecodeError) as e:
            raise ArtifactFormatError(f"{path} has a corrupted header: {e}")
        payload = f.read()

    blocks = {}
    offset = 0
    itemsize = np.dtype(FLOAT_DTYPE).itemsize
    for entry in meta['blocks']:
        shape = tuple(entry['shape'])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + count * itemsize
        if end > len(payload):
            raise ArtifactFormatError(f"{path} is truncated in block"
                                      f" {entry['name']}")
        blocks[entry['name']] = np.frombuffer(
            payload[offset:end], dtype=FLOAT_DTYPE).reshape(shape).astype(
                np.float64)
        offset = end
    if offset != len(payload):
        raise ArtifactFormatError(f"{path} has {len(payload) - offset}"
                                  f" trailing bytes")
    return meta, blocks


def save_embeddings(path: str, matrix: np.ndarray,
                    provenance: Provenance, source: str) -> None:
    """
    Writes the binary store and, next to it, a text version with one row per
    line for inspection.
    """

    header = {'provenance': provenance.as_dict(), 'source': source}
    write_blocks(path, EMBEDDINGS_MAGIC, header, {'features': matrix})

    text_path = os.path.splitext(path)[0] + '.txt'
    with open(text_path, 'w', encoding='utf-8') as f:
        f.write(f"# config_hash={provenance.config_hash}"
                f" seed={provenance.seed} version={provenance.version}"
                f" shape={matrix.shape[0]}x{matrix.shape[1]}\n")
        for row in matrix:
            f.write(' '.join(repr(float(x)) for x in row) + '\n')


def load_embeddings(path: str) -> np.ndarray:
    _, blocks = read_blocks(path, EMBEDDINGS_MAGIC)
    if 'features' not in blocks:
        raise ArtifactFormatError(f"{path} has no feature block")
    return blocks['features']


def save_profiles(path: str, profiles: Sequence[EnhancedProfile],
                  provenance: Provenance) -> None:
    write_jsonl(path, (dataclasses.asdict(p) for p in profiles), provenance)


def load_profiles(path: str) -> List[EnhancedProfile]:
    _, records = read_jsonl(path)
    try:
        return [EnhancedProfile(**record) for record in records]
    except TypeError as e:
        raise ArtifactFormatError(f"{path} has an invalid profile: {e}")


def _weights_path(path: str) -> str:
    return os.path.splitext(path)[0] + '.weights.json'


def save_hypergraph(path: str, graph: Hypergraph,
                    provenance: Provenance, spec_name: str) -> None:
    _prepare(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"# nodes={graph.num_nodes} edges={graph.num_edges}"
                f" kinds={spec_name} config_hash={provenance.config_hash}"
                f" seed={provenance.seed} version={provenance.version}\n")
        for edge in graph.hyperedges:
            members = ','.join(str(m) for m in edge.members)
            f.write(f"{edge.edge_id}\t{edge.kind.name}\t{members}\n")

    write_json(_weights_path(path), {
        'num_nodes': graph.num_nodes,
        'node_weights': graph.node_weights.tolist(),
        'edge_weights': graph.edge_weights.tolist()
    }, provenance)


def hypergraph_header(path: str) -> Dict[str, str]:
    """
    The key=value pairs of the comment line of a hypergraph file: nodes,
    edges, kinds and the provenance.
    """

    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline()
    if not first.startswith('#'):
        raise ArtifactFormatError(f"{path} has no header line")
    pairs = (item.partition('=') for item in first[1:].split())
    return {key: value for key, sep, value in pairs if sep}


def load_hypergraph(path: str) -> Hypergraph:
    weights = read_json(_weights_path(path))
    hyperedges = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if line.startswith('#') or line.strip() == '':
                continue
            try:
                edge_id, kind, members = line.rstrip('\n').split('\t')
                hyperedges.append(Hyperedge(
                    int(edge_id), EdgeFamily[kind],
                    tuple(int(m) for m in members.split(','))))
            except (ValueError, KeyError) as e:
                raise ArtifactFormatError(f"{path}, line {line_no}: invalid"
                                          f" hyperedge ({e})")

    return Hypergraph(num_nodes=weights['num_nodes'],
                      hyperedges=tuple(hyperedges),
                      node_weights=np.array(weights['node_weights']),
                      edge_weights=np.array(weights['edge_weights']))
