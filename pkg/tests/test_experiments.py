import csv
import json

import numpy as np
import pytest

from slopelab.cli import main
from slopelab.convex_core import argmin, check_convexity, evaluate, to_dict
from slopelab.experiments import (
    ConfigError,
    InstanceSpec,
    expand,
    generate,
    instance_seed,
    load_config,
    parse_config,
    run_sweep,
)


class TestGenerate:
    def test_one_dimensional(self):
        inst = generate(InstanceSpec(n=1, seed=5))
        assert inst.f.n == 1 and inst.x.shape == (1,)
        assert inst.r > 0

    def test_pure_quadratic(self):
        inst = generate(InstanceSpec(n=3, family="pure-quadratic", seed=2))
        assert inst.f.m == 0
        assert np.all(np.linalg.eigvalsh(inst.f.quad_matrix) > 0)

    def test_constant_perturbation(self, rng):
        inst = generate(InstanceSpec(n=2, perturbation="constant", epsilon=5.0, seed=9))
        for y in rng.normal(size=(50, 2)) * 4:
            assert evaluate(inst.g, y) - evaluate(inst.f, y) == pytest.approx(5.0, abs=1e-12)

    def test_deterministic(self):
        s = InstanceSpec(n=3, family="mixed", m=5, seed=123)
        a, b = generate(s), generate(s)
        np.testing.assert_array_equal(a.x, b.x)
        assert to_dict(a.f) == to_dict(b.f) and to_dict(a.g) == to_dict(b.g)

    def test_max_affine_convex_and_bounded(self):
        for seed in range(5):
            inst = generate(InstanceSpec(n=3, family="max-affine", m=6, seed=seed))
            assert check_convexity(inst.f, np.random.default_rng(seed), samples=200) <= 1e-9
            assert argmin(inst.f).bounded

    def test_x_outside_argmin(self):
        for seed in range(10):
            inst = generate(InstanceSpec(n=2, seed=seed, flat_bottom=True))
            assert inst.r / inst.spec.radius_multiple > 1e-6

    @pytest.mark.parametrize("bad", [dict(n=0), dict(family="cubic"), dict(m=0), dict(B=-1.0),
                                     dict(perturbation="rotate"), dict(epsilon=-0.1),
                                     dict(radius_multiple=0.5)])
    def test_invalid_spec(self, bad):
        kw = dict(n=2)
        kw.update(bad)
        with pytest.raises(ConfigError) as exc:
            InstanceSpec(**kw)
        assert exc.value.field == next(iter(bad))


class TestConfig:
    def test_expand_counts(self):
        cfg = parse_config({"sweeps": [{"n": [1, 2], "epsilon": [0.1, 0.2, 0.3], "count": 4}]})
        assert len(expand(cfg, 0)) == 24

    def test_seed_independent_of_epsilon(self):
        cfg = parse_config({"sweeps": [{"n": 2, "epsilon": [0.1, 0.2], "perturbation": ["scale", "affine"],
                                        "count": 3}]})
        seeds = {}
        for s in expand(cfg, 7):
            seeds.setdefault((s.perturbation, s.epsilon), []).append(s.seed)
        assert len({tuple(v) for v in seeds.values()}) == 1

    def test_seed_depends_on_run_seed(self):
        assert instance_seed(1, 0, 2) != instance_seed(2, 0, 2)
        assert instance_seed(1, 0, 2) == instance_seed(1, 0, 2)

    @pytest.mark.parametrize("doc,field", [
        ({"sweeps": [{"n": 0}]}, "sweeps[0].n"),
        ({"sweeps": [{"n": 2, "family": "bogus"}]}, "sweeps[0].family"),
        ({"radius_multiple": 0.5}, "radius_multiple"),
        ({"tube_samples": -1}, "tube_samples"),
        ({"flow": {"step_tol": -1}}, "flow.step_tol"),
        ({"flow": {"nope": 1}}, "flow.nope"),
        ({"tolerances": {"cert_slack": 0}}, "tolerances.cert_slack"),
        ({"outputs": {"reports": "/abs.csv"}}, "outputs.reports"),
        ({"bogus": 1}, "bogus"),
    ])
    def test_field_errors(self, doc, field):
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.field.startswith(field)

    def test_syntax_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "sweeps": [\n    {"n": 2,,}\n  ]\n}\n')
        with pytest.raises(ConfigError) as exc:
            load_config(str(p))
        assert exc.value.field == "line 3"


class TestSweep:
    CFG = {"sweeps": [{"n": [1, 2], "family": "mixed", "perturbation": "affine",
                       "epsilon": [0.01, 0.1], "count": 2}]}

    def test_outputs_and_certificates(self, tmp_path):
        code, summary = run_sweep(parse_config(self.CFG), 3, str(tmp_path), timestamp=False)
        assert code == 0
        assert summary["completed"] == summary["instances"] == 8
        with open(tmp_path / "reports.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert [int(r["instance_id"]) for r in rows] == list(range(8))
        assert all(r["passed"] == "True" for r in rows)
        for name in ("certificates.csv", "sweep_plot.csv", "summary.json"):
            assert (tmp_path / name).exists()

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_sweep(parse_config(self.CFG), 11, str(a), timestamp=False)
        run_sweep(parse_config(self.CFG), 11, str(b), timestamp=False)
        for name in ("reports.csv", "certificates.csv", "sweep_plot.csv", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_sweep(parse_config(self.CFG), 4, str(a), jobs=1, timestamp=False)
        run_sweep(parse_config(self.CFG), 4, str(b), jobs=2, timestamp=False)
        assert (a / "reports.csv").read_bytes() == (b / "reports.csv").read_bytes()

    def test_timestamp_line(self, tmp_path):
        run_sweep(parse_config(self.CFG), 0, str(tmp_path), timestamp=True)
        assert (tmp_path / "reports.csv").read_text().startswith("# generated")


def _write(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


class TestCli:
    ABS = {"instance": {"f": {"n": 1, "affine_slopes": [[1.0], [-1.0]], "affine_offsets": [0.0, 0.0]},
                        "g": {"n": 1, "affine_slopes": [[1.0], [-1.0]], "affine_offsets": [0.0, 0.0],
                              "constant": 5.0},
                        "x": [2.0]}}
    HALF_SQ = {"instance": {"f": {"quad_matrix": [[1.0]]}, "x": [1.0]}}

    def test_verify_equality(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["verify", "--config", _write(tmp_path, self.ABS), "--out", str(out), "--no-timestamp"])
        assert code == 0
        text = capsys.readouterr().out
        assert "equality case" in text and "PASSED" in text
        doc = json.loads((out / "verify_report.json").read_text())
        assert doc["margin"] == pytest.approx(0.0, abs=1e-9)
        assert "generated" not in doc

    def test_reconstruct(self, tmp_path):
        out = tmp_path / "out"
        assert main(["reconstruct", "--config", _write(tmp_path, self.HALF_SQ), "--out", str(out)]) == 0
        doc = json.loads((out / "reconstruct.json").read_text())
        assert doc["gap"] == pytest.approx(0.5, rel=1e-3)

    def test_flow(self, tmp_path):
        out = tmp_path / "out"
        assert main(["flow", "--seed", "3", "--out", str(out)]) == 0
        lines = (out / "trajectory.jsonl").read_text().splitlines()
        assert len(lines) > 2
        json.loads(lines[0])

    def test_knstudy(self, tmp_path):
        out = tmp_path / "out"
        assert main(["knstudy", "--n", "1", "--out", str(out), "--no-timestamp"]) == 0
        summary = json.loads((out / "kn_summary.json").read_text())
        assert summary["1"]["max_ratio"] == pytest.approx(1.0, abs=1e-9)

    def test_sweep_deterministic(self, tmp_path):
        cfg = _write(tmp_path, {"sweeps": [{"n": 2, "epsilon": [0.01, 0.1], "count": 2}]})
        for d in ("a", "b"):
            assert main(["sweep", "--config", cfg, "--seed", "9", "--out", str(tmp_path / d),
                         "--no-timestamp"]) == 0
        assert (tmp_path / "a" / "reports.csv").read_bytes() == (tmp_path / "b" / "reports.csv").read_bytes()

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfg = _write(tmp_path, {"sweeps": [{"n": 2}], "radius_multiple": -1})
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "radius_multiple" in capsys.readouterr().err

    def test_bad_arguments(self, tmp_path):
        assert main(["verify", "--seed", "-1", "--out", str(tmp_path)]) == 2
        assert main(["verify", "--jobs", "0", "--out", str(tmp_path)]) == 2
        assert main(["nope"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["verify", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2

    def test_numerical_error_exit_3(self, tmp_path):
        # x outside the tube the user asked for
        doc = {"instance": {"f": {"quad_matrix": [[1.0]]}, "x": [3.0], "r": 1.0}}
        assert main(["verify", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3
