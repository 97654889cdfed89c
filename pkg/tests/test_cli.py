import csv
import math
import os
import pathlib

import numpy as np
import pytest

from qemitter import fits
from qemitter.cli import FIGURES, cmd_reproduce, main
from qemitter.config import RunConfig
from qemitter.fits import exponential
from qemitter.results import csv_text, parse_summary

GOLDEN = pathlib.Path(__file__).parent / "golden"


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    summary = {}
    if (out / "summary.txt").exists():
        summary = parse_summary((out / "summary.txt").read_text())
    return code, out, summary


def _table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestSimulate:
    def test_rabi_first_maximum(self, tmp_path):
        code, out, s = _run(tmp_path, "simulate", "rabi", "--s", "367")
        assert code == 0
        header, data = _table(out / "rabi.csv")
        width = data[1, 0] - data[0, 0]
        assert abs(float(s["rabi.s367.pi_time_ns"]) - 1.73) <= width
        assert float(s["rabi.s367.pi_over_omega_ns"]) == pytest.approx(1.7255, abs=1e-4)

    def test_hahn_without_decoherence_is_flat(self, tmp_path):
        cfg = _write(tmp_path, "z.cfg", "emitter.t1_ns = inf\nemitter.t2_star_ns = inf\n"
                     "emitter.gamma_pd_intrinsic_mhz = 0\nemitter.gamma_pd_laser_mhz = 0\n"
                     "sequence.rabi_mhz = 290\n")
        code, out, _ = _run(tmp_path, "simulate", "hahn", "--config", cfg)
        assert code == 0
        header, data = _table(out / "hahn.csv")
        col = header.index("contrast")
        assert np.allclose(data[:, col], 1.0, atol=1e-12)
        # without rabi_mhz an infinite T1 leaves Omega undefined
        cfg = _write(tmp_path, "y.cfg", "emitter.t1_ns = inf\n")
        assert _run(tmp_path, "simulate", "hahn", "--config", cfg, name="y")[0] == 2

    def test_ramsey_decay_time_matches_library(self, tmp_path):
        from qemitter.sequences import contrast_curve, rabi_from_saturation
        code, out, s = _run(tmp_path, "simulate", "ramsey")
        cfg = RunConfig()
        em = cfg.ramsey_emitter_params()
        taus = np.asarray(cfg.sequence.tau_ns)
        c = contrast_curve("ramsey", taus, em, rabi_from_saturation(cfg.sequence.s, 7.44))
        header, data = _table(out / "ramsey.csv")
        assert np.allclose(data[:, header.index("contrast")], c.contrast, rtol=1e-12)
        t_e = float(s["ramsey.one_over_e_time_ns"])
        assert 1.0 < t_e < em.t2_star

    def test_ple_and_map(self, tmp_path):
        assert _run(tmp_path, "simulate", "ple", name="a")[0] == 0
        code, out, _ = _run(tmp_path, "simulate", "rabi-map", "--s", "50", name="b")
        assert code == 0 and (out / "rabi_map.csv").exists()

    def test_deterministic_across_threads(self, tmp_path):
        _, a, _ = _run(tmp_path, "simulate", "rabi", "--s", "50", "102", name="a")
        _, b, _ = _run(tmp_path, "simulate", "rabi", "--s", "50", "102", "--threads", "3",
                       name="b")
        for f in ("rabi.csv", "summary.txt"):
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_usage_errors(self, tmp_path):
        assert _run(tmp_path, "simulate", "ramsey", "--s", "1", "2")[0] == 2
        assert _run(tmp_path, "simulate", "rabi", "--s", "-1")[0] == 2
        assert _run(tmp_path, "simulate", "rabi", "--threads", "0")[0] == 2
        with pytest.raises(SystemExit) as info:
            main(["simulate", "cpmg"])
        assert info.value.code == 2

    def test_bad_config_leaves_no_output(self, tmp_path, capsys):
        cfg = _write(tmp_path, "bad.cfg", "emitter.t1_ns = 7.44\nemitter.bogus = 1\n")
        code, out, _ = _run(tmp_path, "simulate", "rabi", "--config", cfg)
        assert code == 2 and not out.exists()
        assert "line 2" in capsys.readouterr().err


class TestHom:
    def test_values(self, tmp_path):
        code, out, s = _run(tmp_path, "hom")
        assert code == 0
        assert abs(float(s["hom.visibility_infinite"]) - 0.632) <= 0.02
        header, data = _table(out / "hom_vs_theta.csv")
        assert data[0, 0] == 1.0 and data[0, 1] == 1.0

    def test_monte_carlo_spot_check(self, tmp_path):
        cfg = _write(tmp_path, "h.cfg", "hom.window_ns = 5, 11.1, 30\n")
        code, out, s = _run(tmp_path, "hom", "--mc", "100000", "--config", cfg)
        assert code == 0
        assert float(s["hom.mc_max_abs_z"]) < 3.0
        assert _run(tmp_path, "hom", "--mc", "-1", name="x")[0] == 2


class TestFit:
    def _lifetime_csv(self, tmp_path, rng):
        t = np.linspace(0.1, 60, 300)
        y = rng.poisson(1e8 * exponential(t, {"A": 1.423e-5, "T1": 7.44, "B": 5.6e-8}))
        return _write(tmp_path, "life.csv", csv_text(["t_ns", "value"], [t, y]))

    def test_lifetime(self, tmp_path, rng):
        path = self._lifetime_csv(tmp_path, rng)
        code, out, s = _run(tmp_path, "fit", "lifetime", path)
        assert code == 0
        assert float(s["fit.T1"]) == pytest.approx(7.44, abs=0.2)
        assert s["fit.converged"] == "true"
        header, data = _table(out / "residuals.csv")
        assert header == ["t_ns", "value", "model", "residual"] and data.shape == (300, 4)

    def test_rerun_is_bit_identical(self, tmp_path, rng):
        path = self._lifetime_csv(tmp_path, rng)
        _, a, _ = _run(tmp_path, "fit", "lifetime", path, name="a")
        _, b, _ = _run(tmp_path, "fit", "lifetime", path, name="b")
        for f in os.listdir(a):
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_sigma_column_and_lineshape(self, tmp_path, rng):
        x = np.linspace(-300, 300, 121)
        y = fits.gaussian(x, {"amplitude": 10.0, "center": 0.0, "fwhm": 64.0, "offset": 0.5})
        path = _write(tmp_path, "g.csv", csv_text(["detuning_mhz", "value", "sigma"],
                                                  [x, y + rng.normal(0, 0.05, x.size),
                                                   np.full(x.size, 0.05)]))
        code, _, s = _run(tmp_path, "fit", "gaussian", path)
        assert code == 0 and float(s["fit.fwhm_mhz"]) == pytest.approx(64.0, rel=0.01)

    def test_hahn_raw_contrast(self, tmp_path, hahn_emitter):
        from qemitter.sequences import contrast_curve, rabi_from_saturation
        taus = np.linspace(0, 20, 21)
        c = contrast_curve("hahn", taus, hahn_emitter, rabi_from_saturation(367, 7.44),
                           n_nodes=16)
        path = _write(tmp_path, "h.csv", csv_text(["t_ns", "value"], [taus, c.raw]))
        cfg = _write(tmp_path, "h.cfg", "ensemble.nodes = 16\n")
        code, _, s = _run(tmp_path, "fit", "hahn", path, "--raw-contrast", "--config", cfg)
        assert code == 0
        assert float(s["fit.gamma_pd_intrinsic_mhz"]) == pytest.approx(6.39, rel=1e-3)
        assert float(s["fit.gamma_pd_laser_mhz"]) == pytest.approx(16.0, rel=1e-3)

    @pytest.mark.parametrize("body, fragment", [
        ("", "empty CSV"),
        ("t_ns,value\n0,1\n1\n", "line 3"),
        ("x,y\n0,1\n", "header"),
        ("t_ns,value,sigma\n0,1,0\n1,2,1\n2,3,1\n3,4,1\n", "sigma"),
    ])
    def test_bad_csv(self, tmp_path, capsys, body, fragment):
        path = _write(tmp_path, "bad.csv", body)
        assert _run(tmp_path, "fit", "lifetime", path)[0] == 2
        assert fragment in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert _run(tmp_path, "fit", "lifetime", str(tmp_path / "nope.csv"))[0] == 2

    def test_non_convergence_exit_status(self, tmp_path, rng, monkeypatch, capsys):
        path = self._lifetime_csv(tmp_path, rng)
        orig = fits.fit_lifetime
        monkeypatch.setattr(fits, "fit_lifetime", lambda *a, **k: orig(*a, max_iter=1, **k))
        code, out, s = _run(tmp_path, "fit", "lifetime", path)
        assert code == 1
        assert s["fit.converged"] == "false"
        assert "did not converge" in capsys.readouterr().err


class TestCorrect:
    def test_sbr(self, tmp_path):
        code, _, s = _run(tmp_path, "correct", "--sbr", "23.91")
        assert code == 0 and float(s["g2_from_sbr"]) == pytest.approx(0.0836, abs=1e-4)

    def test_visibility_chain(self, tmp_path):
        code, _, s = _run(tmp_path, "correct", "--g2par", "0.22", "--g2perp", "0.51",
                          "--epsilon", "0.04", "--g2", "0.0836", "--delta2", "0.04")
        assert code == 0
        assert float(s["visibility_raw"]) == pytest.approx(0.569, abs=1e-3)
        v = float(s["visibility_corrected"])
        # chained arithmetic gives 0.7294; quoted 73(13) %
        assert v == pytest.approx(0.5686275 * 1.1672 * 1.0128 / 0.9216, rel=1e-6)
        assert abs(v - 0.73) < 0.13

    def test_no_corrections(self, tmp_path):
        code, _, s = _run(tmp_path, "correct", "--v-raw", "0.6", "--epsilon", "0",
                          "--g2", "0", "--delta2", "0")
        assert code == 0 and float(s["visibility_corrected"]) == 0.6

    def test_budget(self, tmp_path):
        code, _, s = _run(tmp_path, "correct", "--p-detected", "6.7e-5", "--branching", "0.4",
                          "--qe", "0.8", "--setup", "0.8", "--direction", "0.5")
        assert code == 0 and float(s["coupling_efficiency"]) == pytest.approx(5.234e-4, rel=1e-3)

    @pytest.mark.parametrize("argv", [
        ["--v-raw", "0.5", "--epsilon", "2"],
        ["--g2par", "0.2"],
        ["--p-detected", "1e-4"],
        ["--sbr", "0"],
        [],
    ])
    def test_out_of_range(self, tmp_path, argv):
        assert _run(tmp_path, "correct", *argv)[0] == 2


def _compare_tables(path, golden):
    h1, d1 = _table(path)
    h2, d2 = _table(golden)
    assert h1 == h2
    np.testing.assert_allclose(d1, d2, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("figure", FIGURES)
def test_reproduce_matches_golden(tmp_path, figure):
    code, out, summary = _run(tmp_path, "reproduce", figure)
    assert code == 0
    ref = GOLDEN / figure
    assert sorted(os.listdir(out)) == sorted(os.listdir(ref))
    for name in os.listdir(ref):
        if name.endswith(".csv"):
            _compare_tables(out / name, ref / name)
    gold = parse_summary((ref / "summary.txt").read_text())
    assert summary.keys() == gold.keys()
    for k, v in gold.items():
        try:
            assert float(summary[k]) == pytest.approx(float(v), rel=1e-9, abs=1e-12)
        except ValueError:
            assert summary[k] == v


def test_reproduce_is_byte_identical(tmp_path):
    a = cmd_reproduce("fig3a").render()
    b = cmd_reproduce("fig3a", threads=4).render()
    assert a == b


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "qemitter", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
