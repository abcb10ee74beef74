"""Classification of the matrix-symbol gallery and a block reduction.

Prints the principal-type and constant-characteristics verdicts with their
numeric witnesses, then reduces a unitarily conjugated diagonal symbol to
block form along a path and reports the residuals.
"""
import numpy as np

from psolv.systems import block_reduce, gallery, symmetric_example

for rep in gallery():
    pt = rep.pt_certificate
    ok = all(rep.matches().values())
    print(f"{rep.name:17s} principal type={str(rep.principal_type):5s} "
          f"({pt['verdict']}, k={pt.get('k')}) constant char.={str(rep.constant_characteristics):5s} "
          f"diag.={str(rep.diagonalizable):5s} sign={rep.psi_status:11s} "
          f"{'matches' if ok else 'MISMATCH'}")

rng = np.random.default_rng(0)
U, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
P = lambda w: U @ np.diag([w[0] + 1j * w[1], 1.0, -2.0 + 1j]) @ U.conj().T
pts = np.column_stack([np.linspace(-0.2, 0.2, 11), np.linspace(0.1, -0.1, 11)])
r = block_reduce(P, pts)
print(f"\nblock reduction: status={r.status}, K={r.K}, max |Q12|={r.q12.max():.1e}, "
      f"max |Q21|={r.q21.max():.1e}, round trip {r.roundtrip.max():.1e}")

# the symmetric example collides at w = 0 but reduces on an arc avoiding it
arc = 0.1 * np.column_stack([np.cos(np.linspace(0.1, 1.5, 8)), np.sin(np.linspace(0.1, 1.5, 8))])
print("symmetric example through 0:",
      block_reduce(symmetric_example, [[0.1, 0], [0, 0], [-0.1, 0]],
                   lam=lambda w: np.hypot(*w)).status)
print("symmetric example on an arc:",
      block_reduce(symmetric_example, arc, lam=lambda w: np.hypot(*w)).status)
