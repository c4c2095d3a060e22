"""
CLI Tests
Subcommands, exit codes and report rendering
"""

import csv
import io
import json
import math

import pytest

import cli
import canonical
import orlicz
from montecarlo import CampaignConfig, verify_dominance
from schemas import BoundReport, CampaignResult, CampaignSummary, Provenance


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def empty_campaign():
    return CampaignResult(
        points=[],
        summary=CampaignSummary(points=0, violations=0, worst_margin=0.0),
        provenance=Provenance(bound="canonical-iid", seed=0, stream=0, trials=1000, config_hash="0" * 64),
    )


class TestCalculators:
    """Calculator subcommands"""

    def test_nv_prints_ten(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "nv", "--phi", "quadratic", "--t", "3,4", "--v", "2")
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(10.0)

    def test_nv_table(self, capsys):
        code, out, _ = run(capsys, "nv", "--t", "3,4", "--v", "2")
        assert code == 0
        assert any(line.split()[:2] == ["value", "10"] for line in out.splitlines() if line.strip())

    def test_randomized_prints_eight(self, capsys):
        code, out, _ = run(
            capsys, "--format", "json", "randomized", "--alpha", "0.1353", "--tau", "1", "--phi", "quadratic", "--u", "1"
        )
        assert code == 0
        report = json.loads(out)
        assert report["threshold"] == pytest.approx(8.0, abs=1e-3)
        assert report["classical"] == report["threshold"]

    def test_tail_bound_general(self, capsys):
        code, out, _ = run(
            capsys, "--format", "json", "tail-bound", "--t", "3,4", "--v", "1", "--s", "1", "--K", "2"
        )
        assert code == 0
        assert json.loads(out)["threshold"] == pytest.approx(20.0 * math.sqrt(2.0))

    def test_tail_bound_iid_missing_flags(self, capsys):
        code, _, err = run(capsys, "tail-bound", "--kind", "iid", "--t", "1", "--z", "1")
        assert code == 2
        assert "--K1" in err

    def test_tail_bound_domain_error(self, capsys):
        code, _, err = run(capsys, "tail-bound", "--t", "1", "--v", "1", "--s", "0.5", "--K", "1")
        assert code == 1
        assert err.startswith("error:")

    def test_t_file(self, capsys, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("3,4\n")
        code, out, _ = run(capsys, "--format", "json", "nv", "--t-file", str(path), "--v", "2")
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(10.0)

    def test_conjugate(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "conjugate", "--phi", "power:3", "--y", "1")
        assert code == 0
        assert json.loads(out)[0]["phi_star"] == pytest.approx(2.0 / 3.0)

    def test_validate_phi(self, capsys):
        code, out, _ = run(capsys, "--format", "csv", "validate-phi", "--phi", "exp")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows and all(row["passed"] == "true" for row in rows)

    def test_functional_bound(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "functional-bound", "--coins", "4", "--t", "1,2")
        assert code == 0
        points = json.loads(out)
        assert all(p["bound"] >= p["exact_tail"] for p in points)

    def test_pca_and_rademacher(self, capsys):
        _, out, _ = run(capsys, "--format", "json", "pca", "--d", "4", "--n", "100", "--delta", str(math.exp(-1)), "--K3", "1")
        assert json.loads(out)["bound"] == pytest.approx(24 * math.e / 10)
        _, out, _ = run(
            capsys, "--format", "json", "rademacher", "--n", "100", "--delta", str(math.exp(-1)),
            "--L", "1", "--norm-x", "1", "--complexity", "0.5", "--norm-y", "1"
        )
        report = json.loads(out)
        assert report["bound"] == pytest.approx(0.5 + 12 * math.e / 10)
        assert report["regression_bound"] == pytest.approx(1.2 * 2 * (1 + math.e))

    def test_rademacher_sample_file(self, capsys, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("0.6,0.8\n")
        code, out, _ = run(
            capsys, "--format", "json", "rademacher", "--n", "1", "--delta", str(math.exp(-1)),
            "--L", "1", "--norm-x", "1", "--sample", str(path), "--n-eps", "100"
        )
        assert code == 0
        assert json.loads(out)["complexity"] == pytest.approx(2.0)

    def test_rademacher_missing_sample(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "rademacher", "--n", "10", "--delta", "0.1", "--L", "1", "--norm-x", "1",
            "--sample", str(tmp_path / "none.csv")
        )
        assert code == 2

    def test_norm_of_model(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "norm", "--model", "gaussian:2")
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(2.0)

    def test_norm_of_samples_centering_flag(self, capsys, tmp_path):
        path = tmp_path / "shifted.csv"
        path.write_text("1\n3\n" * 1000)
        _, out, _ = run(capsys, "--format", "json", "norm", "--samples", str(path))
        assert json.loads(out)["value"] <= 1.05
        _, out, _ = run(capsys, "--format", "json", "norm", "--samples", str(path), "--no-center")
        assert json.loads(out)["value"] > 10.0

    def test_unknown_flag_rejected(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["nv", "--t", "1", "--v", "1", "--bogus", "1"])
        assert info.value.code == 2


class TestCampaignCommands:
    """verify and calibrate"""

    def test_verify_missing_config(self, capsys, tmp_path):
        code, _, err = run(capsys, "verify", "--config", str(tmp_path / "missing.cfg"))
        assert code == 2
        assert "not found" in err

    def test_verify_writes_csv_and_json(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setattr(cli.settings, "output_dir", str(tmp_path))
        config = tmp_path / "iid.cfg"
        config.write_text("bound=canonical-iid\nt=1,1\nz_grid=1,2,3\ntrials=5000\n")
        code, out, _ = run(
            capsys, "--output", "result.json", "verify", "--config", str(config), "--seed", "4", "--csv", "points.csv"
        )
        assert code == 0
        assert "violations=0" in out
        rows = list(csv.DictReader(io.StringIO((tmp_path / "points.csv").read_text())))
        assert len(rows) == 3
        result = CampaignResult.model_validate_json((tmp_path / "result.json").read_text())
        assert result.provenance.seed == 4

    def test_verify_violation_exits_one(self, capsys, tmp_path):
        config = tmp_path / "shrunk.cfg"
        config.write_text("bound=canonical-general\ndimension=5\ntrials=20000\nthreshold_scale=0.02\n")
        code, _, _ = run(capsys, "verify", "--config", str(config))
        assert code == 1

    def test_seed_determines_output(self, capsys, tmp_path):
        config = tmp_path / "iid.cfg"
        config.write_text("bound=canonical-iid\nt=1\nz_grid=0.5,1\ntrials=5000\n")
        _, first, _ = run(capsys, "--format", "json", "verify", "--config", str(config), "--seed", "9")
        _, second, _ = run(capsys, "--format", "json", "verify", "--config", str(config), "--seed", "9")
        assert first == second

    def test_calibrate_wrong_constant(self, capsys, tmp_path):
        config = tmp_path / "iid.cfg"
        config.write_text("bound=canonical-iid\nt=1\nz_grid=1\n")
        code, _, _ = run(capsys, "calibrate", "--config", str(config), "--constant", "C")
        assert code == 2


class TestEmitReport:
    """JSON, CSV and table rendering"""

    def test_empty_campaign_csv_is_header_only(self):
        text = cli.emit_report(empty_campaign(), "csv").decode()
        assert text.splitlines() == ["threshold,empirical_tail,ci_low,ci_high,bound,dominated,p_value"]

    def test_bound_report_json_keys(self):
        report = canonical.tail_bound_iid(1.0, [1.0], orlicz.quadratic(), 1.0, 1.0)
        data = json.loads(cli.emit_report(report, "json"))
        assert set(data) == {"threshold", "probability_bound", "constants", "regime"}

    def test_json_round_trip(self):
        report = canonical.tail_bound_iid(2.0, [1.0, 2.0], orlicz.power(3), 1.5, 0.5)
        assert BoundReport.model_validate_json(cli.emit_report(report, "json")) == report

    def test_twelve_significant_digits(self):
        text = cli.emit_report({"x": 1.0 / 3.0}, "csv").decode()
        assert text.splitlines()[1] == "0.333333333333"

    def test_campaign_table_has_one_row_per_point(self):
        result = verify_dominance(CampaignConfig(bound="canonical-iid", t="1", z_grid="0.5,1,2", trials=2000))
        lines = cli.emit_report(result, "table").decode().splitlines()
        assert lines[0].split()[:2] == ["parameters.z", "threshold"]
        assert len([line for line in lines[1:] if line and not line.startswith("points=")]) == 3

    def test_unknown_format(self):
        with pytest.raises(cli.ConfigError):
            cli.emit_report({"x": 1.0}, "yaml")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
