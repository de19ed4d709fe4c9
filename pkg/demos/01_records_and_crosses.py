#!/usr/bin/env python3
# Synthetic transformer records, the held-out split, and GBDT feature crosses.

import numpy as np

from gbdtkg import GbdtParams, cross_matrix, generate_synthetic, split_records, train_gbdt
from gbdtkg.records import FEATURE_NAMES, feature_matrix, label_vector

records = generate_synthetic(n_per_class=131, separation=1.5, seed=0)
split = split_records(records, n_test_per_class=10, seed=0)
print("train", len(split.train), "test", len(split.test))

X = feature_matrix(split.train)
y = label_vector(split.train)  # 1 = fault
for name, f, s in zip(FEATURE_NAMES, X[y == 1].mean(0), X[y == 0].mean(0)):
    print(f"  {name:<24} fault {f:.3f}  stable {s:.3f}")

model = train_gbdt(list(split.train), GbdtParams(n_trees=30, max_depth=3))
print("trees", len(model.trees), "leaves per tree", model.leaf_counts[:5], "...")

# each record becomes a 0/1 vector with exactly one hot leaf per tree
C = cross_matrix(model, split.train)
print("cross matrix", C.shape, "ones per row", set(C.sum(1).astype(int)))

# records of the same class land in the same leaves more often
fault, stable = C[y == 1], C[y == 0]
same = (fault @ fault.T).mean() / len(model.trees)
cross = (fault @ stable.T).mean() / len(model.trees)
print(f"shared leaves: fault-fault {same:.2f}, fault-stable {cross:.2f}")
