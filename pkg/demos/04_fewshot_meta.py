#!/usr/bin/env python3
# Relation meta-learning: an MLP proposes R from the support pairs, one
# gradient step adapts it, and the query loss trains MLP and embeddings.

import numpy as np

from gbdtkg import build_triples, generate_synthetic
from gbdtkg import fewshot as fs

records = generate_synthetic(15, 1.5, seed=3)
triples = build_triples(records, 80, 80, seed=3)
entities = [r.id for r in records]
tasks = fs.sample_tasks(triples, K=5, seed=3, entities=entities)
for t in tasks:
    print(t.relation.value, "support", len(t.support), "query", len(t.query))

hyper = fs.MetaHyper(dim=8, epochs=40, learning_rate=0.01, seed=3)
fit = fs.train_meta(tasks, hyper, entities)
trace = np.array(fit.loss_trace)
print("summed query loss", " ".join(f"{v:.2f}" for v in trace[:: len(trace) // 8]))

# the fast update in isolation: R' = R - beta * dL_S/dR
task = tasks[0]
R = fs.task_relation(fit.embeddings, fit.net, task)
Rp = fs.adapted_relation(fit.embeddings, fit.net, task, hyper.beta, hyper.gamma)
print("|R' - R| =", round(float(np.linalg.norm(Rp - R)), 4))

for task in tasks:
    pred = fs.link_predict(fit.embeddings, fit.net, task, entities, hyper.beta, hyper.gamma)
    print(task.relation.value, {k: round(v, 3) for k, v in pred.metrics().items()})
