"""Plant a sparse model and watch each solver try to find it.

Least squares spreads energy over every kernel, a uniform-penalty Lasso
prunes but keeps shadow copies of the strong low-order terms, and the
block-weighted fit with its order-dependent penalties recovers the
planted support exactly.
"""
import numpy as np

from dpdkit.gmp import (
    CoefficientVector,
    build_kernel_matrix,
    effective_memory_depth,
    full_structure,
)
from dpdkit.signal import IqSignal
from dpdkit.solver import (
    BcdConfig,
    block_weighted_lasso,
    default_schedule,
    kkt_check,
    lasso_iterated_ridge,
    least_squares,
    ls_refine,
)

rng = np.random.default_rng(22)
n = 4096
samples = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
signal = IqSignal(samples, 1.0)

structure = full_structure(9, 7, 1)
matrix = build_kernel_matrix(signal, structure)
print(f"search structure: {structure.kernel_count} kernels, {n} samples")

# planted truth: shallow memory, a couple of odd-order terms
truth = np.zeros(structure.kernel_count, dtype=np.complex128)
planted = {0: 1.0, 11: 0.6, 15: 0.5j, 43: -0.45}
for idx, val in planted.items():
    truth[idx] = val
clean = matrix.data @ truth
noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
noise *= 1e-5 * np.linalg.norm(clean) / np.linalg.norm(noise)
target = IqSignal(clean + noise, 1.0)

depth_true = effective_memory_depth(CoefficientVector(structure, truth))
print(f"planted support: {sorted(planted)} (effective depth {depth_true})")

# full least squares: every kernel active, noise absorbed everywhere
ls = least_squares(matrix, target)
print(f"\nleast squares: {np.count_nonzero(ls.values)} active kernels, "
      f"depth {effective_memory_depth(ls)}")

# uniform penalty: sparse, and certifiably optimal for its objective
# once the inner loop is allowed to converge fully (clamping survivors
# with a zero threshold would perturb the certificate)
lam = 0.02 * 2.0 * float(np.max(np.abs(matrix.data.conj().T @ target.samples)))
tight = BcdConfig(inner_ridge_iterations=40000, inner_tolerance=1e-13)
plain = lasso_iterated_ridge(matrix, target, lam, 0.0, tight)
report = kkt_check(matrix, target, plain, lam)
print(f"uniform Lasso:  {np.count_nonzero(plain.values)} active kernels, "
      f"depth {effective_memory_depth(plain)}, "
      f"worst optimality violation {report.max_violation / lam:.1e} x lambda")

# block-weighted: the penalty ladder scales with the correlation level,
# so higher orders have to earn their place
schedule = default_schedule(structure, lambda_scale=3e6, threshold_scale=0.2)
weighted, trace = block_weighted_lasso(matrix, target, schedule)
print(f"block-weighted: {np.count_nonzero(weighted.values)} active kernels, "
      f"depth {effective_memory_depth(weighted)}, "
      f"selected iteration {trace.selected.iteration}")
print(f"recovered support: {weighted.support().tolist()}")

# refinement removes the l1 shrinkage bias on the selected support
refined = ls_refine(matrix, target, weighted.support())
bias = max(abs(weighted.values[i] - truth[i]) for i in planted)
residual = max(abs(refined.values[i] - truth[i]) for i in planted)
print(f"\nworst coefficient error, shrunk fit: {bias:.2e}")
print(f"worst coefficient error, refined fit: {residual:.2e}")
