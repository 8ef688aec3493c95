"""Tour of the memory-polynomial structure and its kernel matrix.

Shows how a search structure is declared, what its kernels mean, and how
the two depth measures differ once cross terms are in play.
"""
import numpy as np

from dpdkit.gmp import (
    CoefficientVector,
    apply_model,
    build_kernel_matrix,
    effective_memory_depth,
    full_structure,
    max_memory_lag,
)
from dpdkit.signal import OfdmConfig, generate_ofdm

# memory_depth is the deepest carrier lag, max_order the highest odd
# polynomial order, lagging_depth the number of trailing envelope offsets
small = full_structure(memory_depth=2, max_order=3, lagging_depth=1)
print(f"small structure: {small.kernel_count} kernels")
for desc in small.descriptors():
    print(f"  {desc.branch.value:>7}  order {desc.order_exponent + 1}  "
          f"lag {desc.lag}  offset {desc.envelope_offset}")

# the search structure used by the experiments, and the headline count
# for a wideband configuration
search = full_structure(9, 7, 1)
wide = full_structure(19, 15, 1)
print(f"\nexperiment search structure: {search.kernel_count} kernels")
print(f"wideband reference structure: {wide.kernel_count} kernels")

# Each kernel is one column: carrier sample times a delayed envelope
# power. Columns are exactly reproducible from the descriptor.
signal = generate_ofdm(OfdmConfig(64, 42, 4, 4, seed=7))
matrix = build_kernel_matrix(signal, small)
print(f"\nkernel matrix: {matrix.data.shape[0]} samples x "
      f"{matrix.data.shape[1]} kernels")

desc = matrix.columns[5]
s = signal.samples
lag = np.concatenate([np.zeros(desc.lag, dtype=s.dtype), s])[: len(s)]
column = lag * np.abs(lag) ** desc.order_exponent
print(f"column 5 is {desc.branch.value} order {desc.order_exponent + 1} "
      f"lag {desc.lag}: rebuild error "
      f"{np.max(np.abs(column - matrix.data[:, 5])):.1e}")

# A coefficient vector pairs the structure with one weight per kernel.
# Depth is reported two ways: the deepest carrier lag, and the deepest
# past sample once envelope offsets are counted.
values = np.zeros(small.kernel_count, dtype=np.complex128)
values[0] = 1.0          # linear, lag 0
values[8] = 0.05j        # lagging cross term at lag 2, offset 1
coeffs = CoefficientVector(small, values)
print(f"\nactive kernels: {coeffs.support().tolist()}")
print(f"max carrier lag: {max_memory_lag(coeffs)}")
print(f"deepest sample touched: {effective_memory_depth(coeffs)}")

predicted = apply_model(signal, coeffs)
print(f"model output rms: {predicted.rms:.4f}")
