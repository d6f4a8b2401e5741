"""The reliability-aware loss family and its analytic logit gradients.

Evaluates the partial cross-entropy, partial Dice, and partial entropy
terms on constructed cases with known values, then verifies the analytic
gradient against central finite differences on a random instance.
"""

import math

import numpy as np

from srpl import LossConfig, loss_pce, loss_pdc, loss_pem, loss_total_with_grad
from srpl.image import LabelMask, ProbMap
from srpl.reliability import ReliabilityMask


def main():
    labels = LabelMask(np.array([[0, 0], [1, 1]], dtype=np.uint8), 2)
    all_rel = ReliabilityMask.all_reliable(2, 2)
    all_unrel = ReliabilityMask.all_unreliable(2, 2)
    uniform = ProbMap(np.full((2, 2, 2), 0.5, dtype=np.float32))
    perfect = ProbMap(labels.one_hot().astype(np.float32))

    print(f"cross-entropy, uniform prediction: {loss_pce(uniform, labels, all_rel):.6f}"
          f"  (ln 2 = {math.log(2):.6f})")
    print(f"cross-entropy, perfect prediction: {loss_pce(perfect, labels, all_rel):.6f}")
    print(f"partial Dice, uniform prediction:  {loss_pdc(uniform, labels, all_rel):.6f}  (~1/3)")
    print(f"entropy, uniform over unreliable:  {loss_pem(uniform, all_unrel):.6f}"
          f"  (ln 2 = {math.log(2):.6f})")

    rng = np.random.default_rng(0)
    z = rng.normal(0, 2, size=(2, 5, 5))
    r = LabelMask(rng.integers(0, 2, size=(5, 5)).astype(np.uint8), 2)
    rel = ReliabilityMask(rng.random((5, 5)) < 0.6)
    cfg = LossConfig(lam=10.0)
    report = loss_total_with_grad(z, r, rel, cfg)
    print(f"\nrandom instance: total {report.l_total:.4f} = "
          f"0.5*({report.l_pce:.4f} + {report.l_pdc:.4f}) + {cfg.lam}*{report.l_pem:.4f}")

    h = 1e-4
    worst = 0.0
    it = np.nditer(z, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        fd = (
            loss_total_with_grad(zp, r, rel, cfg).l_total
            - loss_total_with_grad(zm, r, rel, cfg).l_total
        ) / (2 * h)
        worst = max(worst, abs(report.grad[idx] - fd) / max(abs(fd), 1e-8))
        it.iternext()
    print(f"max relative error, analytic vs central differences: {worst:.2e}")


if __name__ == "__main__":
    main()
