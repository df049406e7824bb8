"""Smoke test for the mudp extension module."""

import math
import tempfile

import mudp

N = 128
xs = [i / N for i in range(N)]
u0 = [math.sin(2 * math.pi * x) for x in xs]

# Λ_μ² ∘ Λ_μ^{-2} = id, and the three inverse routes agree
inv = mudp.apply_lambda_mu2_inv(u0)
back = mudp.apply_lambda_mu2(inv)
assert max(abs(a - b) for a, b in zip(back, u0)) < 1e-10
for route in ("green", "closed_form"):
    other = mudp.apply_lambda_mu2_inv(u0, route=route)
    assert max(abs(a - b) for a, b in zip(other, inv)) < 1e-5, route
assert abs(mudp.mean(u0)) < 1e-15

p = mudp.predict_blowup(u0, math.pi)
assert p["applicable"]
assert abs(p["tau"] - math.log(2) / math.pi) < 1e-12
assert not mudp.predict_blowup(u0, 2 * math.pi + 0.1)["applicable"]

times, fields, outcome = mudp.evolve(u0, 1.0, 0.05)
exact = mudp.exact_solution(u0, 1.0, times[-1])
assert outcome["kind"] == "COMPLETED"
assert max(abs(a - b) for a, b in zip(fields[-1], exact)) < 1e-6

ens = mudp.Particles(u0, 128, 1.0)
assert len(ens) == 128
assert abs(ens.velocity_at(0.25) - 1.0) < 1e-8
assert abs(ens.slope_at(0.0) - 2 * math.pi) < 1e-6
samples, outcome = ens.evolve(0.05)
assert outcome["kind"] == "COMPLETED"
last = samples[-1]
assert min(last.stretches) > 0
assert last.transport_drift() < 1e-6

cfg = mudp.Config.from_toml(
    'preset = "zero_mean_sine"\namplitude = 1.0\nlambda = 3.141592653589793\n'
    'n_points = 128\nm_particles = 128\nsolver = "both"\n[integrator]\nt_end = 0.3\n'
)
assert mudp.Config.from_toml(cfg.to_toml()).to_toml() == cfg.to_toml()
with tempfile.TemporaryDirectory() as out:
    report = cfg.run(out)
assert report["outcome"]["kind"] == "BLOWUP"
assert report["records"]["eulerian"][0]["t"] == 0.0

checks = mudp.validate_ops(2024)
assert len(checks) == 8

try:
    mudp.Config.from_toml('preset = "zero_mean_sine"\nlambda = -1.0\n')
except ValueError as e:
    assert "lambda" in str(e)
else:
    raise AssertionError("negative lambda accepted")

print("smoke test passed")
