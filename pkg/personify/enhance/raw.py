"""
Baseline node features without language model enhancement, built directly
from the raw attributes. The columns are concatenated in this fixed order:
    1. Numeric block: the follower count, then every attribute whose observed
       values are all numbers, in attribute order. Standardized to zero mean
       and unit variance over the observed values, missing values are 0.
    2. Categorical blocks: one-hot over the observed vocabulary of every other
       attribute, in attribute order. Missing values are all-zero blocks.
       Free-text attributes (`about`) are left out.
    3. Group block: multi-hot over the groups of the group index, in its
       order.
"""

import logging
from typing import List

import numpy as np
from sklearn.preprocessing import (MultiLabelBinarizer, OneHotEncoder,
                                   StandardScaler)

from personify.ingest import DatasetBundle
from personify.model import FeatureMatrix, LABEL_KEYS


TEXT_ATTRIBUTES = ('about',)

# Placeholder for missing categorical values. It's never part of the
# vocabulary, so it's encoded as an all-zero block.
_MISSING = '\0missing'


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _attribute_names(bundle: DatasetBundle) -> List[str]:
    names: List[str] = []
    for user in bundle.users:
        for key in user.attributes:
            if key not in names and key.strip().lower() not in LABEL_KEYS \
                    and key not in TEXT_ATTRIBUTES:
                names.append(key)
    return names


def raw_feature_matrix(bundle: DatasetBundle) -> FeatureMatrix:
    users = bundle.users
    numeric = [[float(user.follower_count) for user in users]]
    categorical = []
    for name in _attribute_names(bundle):
        values = [user.attributes.get(name) for user in users]
        observed = [value for value in values if value is not None]
        if not observed:
            continue
        if all(_is_number(value) for value in observed):
            numeric.append([np.nan if value is None else float(value)
                            for value in values])
        else:
            categorical.append([_MISSING if value is None else str(value)
                                for value in values])

    # The scaler ignores NaNs when fitting and keeps them when transforming.
    blocks = [np.nan_to_num(StandardScaler().fit_transform(
        np.array(numeric).T), nan=0.0)]

    for values in categorical:
        column = np.array(values, dtype=object).reshape(-1, 1)
        encoder = OneHotEncoder(handle_unknown='ignore')
        encoder.fit(column[column[:, 0] != _MISSING])
        blocks.append(encoder.transform(column).toarray())

    if bundle.group_index:
        binarizer = MultiLabelBinarizer(classes=list(bundle.group_index))
        blocks.append(binarizer.fit_transform(
            [user.group_names for user in users]).astype(np.float64))

    matrix = np.hstack(blocks).astype(np.float64)
    logging.info("Raw features: %d numeric, %d categorical attributes and %d"
                 " groups, %d columns", len(numeric), len(categorical),
                 len(bundle.group_index), matrix.shape[1])
    return matrix
