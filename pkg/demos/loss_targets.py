"""Compare the four retriever objectives on one hand-built example.

Three of the losses distill a target distribution into the retrieval
softmax; the fourth maximizes the marginal likelihood directly. This
script builds a 4-document example where the documents differ in how
much of the output they cover, prints each target side by side, and
shows that every score gradient pushes probability mass toward the
documents the LM found useful.
"""

import numpy as np

from rlab.lm import OverlapLM
from rlab.losses import (LossKind, build_target, distill_step,
                         emdr2_objective)
from rlab.retriever import retrieval_distribution


def main():
    query = "capital of france".split()
    output = "paris is the capital".split()
    docs = [
        tuple("paris is the capital of france".split()),   # full answer
        tuple("paris hosts the louvre museum".split()),     # partial
        tuple("the capital markets rallied today".split()),  # misleading
        tuple("alpine skiing season opens soon".split()),   # irrelevant
    ]
    lm = OverlapLM(vocab_size=1000)

    # pretend the retriever currently prefers the irrelevant document
    scores = np.array([0.0, 0.5, 1.0, 2.0])
    temperature = 0.1
    probs = retrieval_distribution(scores, temperature)

    print("retrieval p(d|q) before training:", np.round(probs, 4))
    print()
    print(f"{'doc':>4} {'adist':>8} {'pdist':>8} {'loop':>8}")
    targets = {kind: build_target(kind, lm, query, docs, output)
               for kind in (LossKind.ADIST, LossKind.PDIST, LossKind.LOOP)}
    for k in range(len(docs)):
        print(f"{k:>4} "
              f"{targets[LossKind.ADIST].probs[k]:>8.4f} "
              f"{targets[LossKind.PDIST].probs[k]:>8.4f} "
              f"{targets[LossKind.LOOP].probs[k]:>8.4f}")

    print()
    for kind, target in targets.items():
        step = distill_step(target, probs, temperature)
        print(f"{kind.value:>6}: KL = {step.value:.4f}, "
              f"score gradient = {np.round(step.grad_wrt_scores, 3)}")

    logliks = lm.per_doc_loglik(query, docs, output)
    step = emdr2_objective(logliks, probs, temperature)
    print(f" emdr2: log marginal = {step.value:.4f}, "
          f"score gradient = {np.round(step.grad_wrt_scores, 3)}")
    print()
    print("every gradient is negative on doc 0 (raise its score) and")
    print("positive on doc 3 (lower it): all four objectives agree on")
    print("the direction, they only weight the middle documents differently.")


if __name__ == "__main__":
    main()
