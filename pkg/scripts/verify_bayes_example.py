"""Numerical checks for the SO(3) posterior-mean example.

Prints, for a random statistic x: the projection of the Monte Carlo
posterior mean relative to x, the skew part of the weighted tau form at
gamma_hat = x and at a perturbed candidate, and the six-dimensional
integral against its closed form for a few random rotation pairs.
"""

import argparse

import numpy as np

from orbitkit import bayes_regression as br
from orbitkit.sphere_geom import rot1, sample_haar_so3


def skew(m):
    return np.linalg.norm(0.5 * (m - m.T))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--c", type=float, default=0.2)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--pairs", type=int, default=5)
    p.add_argument("--seed", type=int, default=20240917)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    x = sample_haar_so3(rng)
    model = br.PosteriorModel(args.c, x)

    w, w_lin, se = br.projection_error(model, args.samples, rng, args.threads)
    print(f"log(x' proj(gamma_bar)) = {np.array2string(w, precision=5)}  (stderr {np.array2string(se, precision=5)})")

    print(f"||skew tau(x)||          = {skew(br.weighted_tau(x, model)):.2e}")
    print(f"||skew tau(x R1(0.5))||  = {skew(br.weighted_tau(x @ rot1(0.5), model)):.2e}")

    for i in range(args.pairs):
        chk = br.verify_posterior_integral(model, sample_haar_so3(rng), sample_haar_so3(rng),
                                           args.samples, rng, args.threads)
        print(f"pair {i}: y={chk.euler_y:.4f}  numeric={chk.numeric:.6e}  analytic={chk.analytic:.6e}  "
              f"rel.err={chk.relative_error:.4f}  (stderr {chk.stderr:.1e})")


if __name__ == "__main__":
    main()
