#!/usr/bin/env python3
"""
Example usage of chainverifier as a library.
Run from the repository root with: python scripts/example_usage.py
"""

import numpy as np

from chainverifier.attractivity import (
    certify_globally_attracting,
    certify_steadily_attracting,
    default_origins,
    find_path,
    return_lengths,
)
from chainverifier.chains import XnesChain, XnesParams
from chainverifier.controllability import rank_witness
from chainverifier.toy_models import noisy_flip_chain
from chainverifier.verdict import assemble_verdict


def print_result(title, model):
    """Pretty print a pydantic result."""
    print(f"\n{'='*60}")
    print(f"{title}")
    print(f"{'='*60}")
    print(model.model_dump_json(indent=2) if model is not None else "None")


def main():
    print("chainverifier - Example Usage")

    chain = XnesChain(XnesParams(n=3, lam=4, mu=2))
    x_star = np.zeros(3)

    # Rank at 0; the first selected step has the smaller f-value
    witness = rank_witness(chain, x_star, [[0.0, 1.0, 0.0, 2.0, 0.0, 0.0]])
    print_result("1. Rank Witness at 0", witness.report)

    # One path from (10, 10, 10) into B(0, 0.1)
    path = find_path(chain, np.full(3, 10.0), x_star, 0.1, 1)
    print_result("2. One-Step Path", path)

    # Certificates over 20 Halton origins in [-5, 5]^3
    origins = default_origins(-5.0, 5.0, 3, count=20)
    globally = certify_globally_attracting(chain, x_star, origins, 0.1, 2, seed=2)
    steadily = certify_steadily_attracting(chain, x_star, origins, 0.1, T=1, span=3, seed=2)
    print(f"\nGlobally attracting: {globally.status}, steadily attracting: {steadily.status}")

    # Verdict
    verdict = assemble_verdict(witness, globally, steadily)
    print_result("3. Verdict", verdict)

    # Period-2 counter-evidence on a flipping chain
    returns = return_lengths(noisy_flip_chain(0.01), [1.0], 0.05, 6)
    print_result("4. Return Lengths of x -> -x + 0.01 w", returns)

    print("\n✅ Example completed! Try `python -m chainverifier analyze --config configs/xnes_sphere.yaml` next.")


if __name__ == "__main__":
    main()
