"""The three reconstruction modes and how they relate.

- one-shot: every iteration re-predicts the whole image from its codes.
- additive: iterations predict corrections that sum up.
- scaled:   additive, but the residual is multiplied by a learned per-block
            gain before encoding and divided back out after decoding; with
            all gains forced to 1 it collapses to plain additive, bit for bit.

Run:  python3 demos/03_reconstruction_modes.py
"""

import numpy as np

from rnic import codec
from rnic.codec import CodecArchitecture, CodecModel, run_iterations
from rnic.tensor import Tensor, no_grad


def arch(mode):
    return CodecArchitecture(
        cell="gru", mode=mode,
        enc_depths=(8, 16, 16, 16), code_depth=4,
        dec_depths=(16, 16, 16, 16, 16), gain_depth=8, iterations=4,
    )


rng = np.random.default_rng(3)
x = Tensor((rng.random((1, 64, 64, 3), dtype=np.float32) * 2 - 1))

for mode in codec.MODES:
    model = CodecModel(arch(mode), seed=9)
    with no_grad():
        trace = run_iterations(model, x, iterations=4)
    res = [float(np.abs(r.data).mean()) for r in trace.residuals]
    gains = ""
    if mode == codec.SCALED:
        gains = "  gain range: %.2f..%.2f" % (
            min(float(g.data.min()) for g in trace.gains),
            max(float(g.data.max()) for g in trace.gains),
        )
    print(f"{mode:>8}: mean|residual| per iteration {['%.3f' % r for r in res]}{gains}")

print("\nscaled mode with unit gains equals additive bit-for-bit:")
scaled = CodecModel(arch(codec.SCALED), seed=9)
additive = CodecModel(arch(codec.ADDITIVE), seed=9)
shared = [p for p in scaled.named_params() if not p[0].startswith("gain")]
for (_, src), (_, dst) in zip(shared, additive.named_params()):
    dst.data[...] = src.data
scaled.gain = lambda xhat: Tensor(np.ones((1, 2, 2, 1), dtype=np.float32))

with no_grad():
    ts = run_iterations(scaled, x, iterations=4, mode=codec.SCALED)
    ta = run_iterations(additive, x, iterations=4, mode=codec.ADDITIVE)
identical = all(np.array_equal(a.data, b.data) for a, b in zip(ts.reconstructions, ta.reconstructions))
print(f"reconstructions identical: {identical}")
