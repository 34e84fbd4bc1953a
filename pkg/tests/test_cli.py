"""Command-line surface: formats, exit codes, determinism."""

import json

import numpy as np
import pytest

from spimax.bootstrap import (
    critical_value_contrast,
    parametric_bootstrap,
    stepdown_quantile_provider,
)
from spimax.cli import (
    export_area_csv,
    export_unit_csv,
    ingest_area_csv,
    ingest_unit_csv,
    log_shift_transform,
    read_tube_constants,
    replace_response,
    run_cli,
)
from spimax.errors import (
    EmptyFile,
    EmptyGrid,
    NonPositiveShift,
    ParseError,
    ShapeMismatch,
)
from spimax.estimation import eblup
from spimax.maxstat import SCALE_FLOOR, single_step_test, step_down_test
from spimax.model import FHM, NERM, BlockLmmData, ClusterBlock, cluster_mean_spec
from spimax.simulate import ScenarioConfig, generate_scenario

from conftest import make_fhm, make_nerm


@pytest.fixture()
def unit_csv(tmp_path):
    data, _ = make_nerm(D=8, n_d=4, seed=2)
    path = tmp_path / "unit.csv"
    path.write_text(export_unit_csv(data))
    return path


@pytest.fixture()
def area_csv(tmp_path):
    data, _ = make_fhm(D=10, seed=2)
    path = tmp_path / "area.csv"
    path.write_text(export_area_csv(data))
    return path


@pytest.fixture()
def tube_file(tmp_path):
    path = tmp_path / "tube.txt"
    path.write_text(
        "# band geometry\n"
        "kappa0=2.5\nzeta0=3.0\nkappa2=0.5\nzeta1=0.2\nm0=0.3\n"
        "euler=0.5\nxi0=1.0\neta0=0.3\nnu=25.0\n"
    )
    return path


# ---------------------------------------------------------------- ingestion


def test_unit_csv_round_trip_is_byte_stable(tmp_path, unit_csv):
    text = unit_csv.read_text()
    data = ingest_unit_csv(unit_csv)
    assert export_unit_csv(data) == text
    again = tmp_path / "again.csv"
    again.write_text(export_unit_csv(data))
    back = ingest_unit_csv(again)
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.X, data.X)
    assert back.cluster_ids == data.cluster_ids


def test_area_csv_round_trip(area_csv):
    data = ingest_area_csv(area_csv)
    assert export_area_csv(data) == area_csv.read_text()
    assert data.model_tag == FHM
    assert np.all(data.known_error_vars > 0)


def test_ingest_groups_by_first_appearance(tmp_path):
    path = tmp_path / "interleaved.csv"
    path.write_text(
        "cluster,y,x1\nb,1.0,0.1\na,2.0,0.2\nb,3.0,0.3\na,4.0,0.4\n"
    )
    data = ingest_unit_csv(path)
    assert data.cluster_ids == ("b", "a")
    np.testing.assert_array_equal(data.y, [1.0, 3.0, 2.0, 4.0])


def test_ingest_diagnostics(tmp_path):
    bad_header = tmp_path / "h.csv"
    bad_header.write_text("id,y,x1\na,1.0,0.5\n")
    with pytest.raises(ParseError, match="header"):
        ingest_unit_csv(bad_header)

    bad_cell = tmp_path / "c.csv"
    bad_cell.write_text("cluster,y,x1\na,1.0,0.5\na,oops,0.6\nb,2.0,0.1\nb,2.0,0.2\n")
    with pytest.raises(ParseError, match="row 3.*'y'"):
        ingest_unit_csv(bad_cell)

    ragged = tmp_path / "r.csv"
    ragged.write_text("cluster,y,x1\na,1.0,0.5\na,1.0\n")
    with pytest.raises(ParseError, match="row 3"):
        ingest_unit_csv(ragged)

    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(EmptyFile):
        ingest_unit_csv(empty)

    header_only = tmp_path / "ho.csv"
    header_only.write_text("cluster,y,x1\n")
    with pytest.raises(EmptyFile):
        ingest_unit_csv(header_only)

    dup = tmp_path / "d.csv"
    dup.write_text("area,y,x1,error_var\na,1.0,0.5,0.4\na,2.0,0.6,0.3\n")
    with pytest.raises(ParseError, match="duplicate area"):
        ingest_area_csv(dup)


def test_tube_constants_file(tmp_path, tube_file):
    k = read_tube_constants(tube_file)
    assert k.kappa0 == 2.5 and k.nu == 25.0

    missing = tmp_path / "m.txt"
    missing.write_text("kappa0=2.5\n")
    with pytest.raises(ParseError, match="missing keys"):
        read_tube_constants(missing)

    unknown = tmp_path / "u.txt"
    unknown.write_text(tube_file.read_text() + "extra=1\n")
    with pytest.raises(ParseError, match="unknown key"):
        read_tube_constants(unknown)

    dup = tmp_path / "dup.txt"
    dup.write_text(tube_file.read_text() + "nu=30\n")
    with pytest.raises(ParseError, match="duplicate key"):
        read_tube_constants(dup)


# ------------------------------------------------------------- transform


def _positive_data(seed=5):
    data, _ = make_nerm(D=6, n_d=5, seed=seed)
    return replace_response(data, np.exp(0.7 * data.y) + 0.3)


def test_log_shift_transform_minimizes_abs_skewness():
    from scipy import stats

    from spimax.estimation import cholesky_residuals

    data = _positive_data()
    grid = np.linspace(data.y.min(), data.y.max(), 9)
    c_star, y_log = log_shift_transform(data, grid)
    assert c_star in grid
    np.testing.assert_array_equal(y_log, np.log(data.y + c_star))
    # recompute the profile; the reported shift must attain the minimum
    skews = []
    for c in grid:
        fit = eblup(replace_response(data, np.log(data.y + c)))
        skews.append(
            abs(stats.skew(cholesky_residuals(replace_response(data, np.log(data.y + c)), fit)))
        )
    assert np.argmin(skews) == list(grid).index(c_star)


def test_log_shift_transform_validation():
    data = _positive_data()
    with pytest.raises(EmptyGrid):
        log_shift_transform(data, [])
    shifted = replace_response(data, data.y - data.y.min() - 1.0)  # y min is -1
    with pytest.raises(NonPositiveShift):
        log_shift_transform(shifted, [0.5])


def test_replace_response_shape_guard():
    data = _positive_data()
    with pytest.raises(ShapeMismatch):
        replace_response(data, np.ones(data.n_total + 1))


# ----------------------------------------------------------------- run_cli


def test_spi_bs_outputs_match_library_and_are_deterministic(tmp_path, unit_csv):
    out1, out2, out3 = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
    argv = [
        "spi", "--model", "nerm", "--data", str(unit_csv),
        "--method", "bs", "--alpha", "0.05", "--B", "120", "--seed", "11",
    ]
    assert run_cli(argv + ["--out", str(out1)]) == 0
    assert run_cli(argv + ["--out", str(out2)]) == 0
    assert run_cli(argv + ["--threads", "3", "--out", str(out3)]) == 0
    assert out1.read_bytes() == out2.read_bytes() == out3.read_bytes()

    payload = json.loads(out1.read_text())
    assert payload["method"] == "bs" and payload["B"] == 120 and payload["seed"] == 11
    data = ingest_unit_csv(unit_csv)
    fit = eblup(data, cluster_mean_spec(data))
    centers = [iv["center"] for iv in payload["intervals"]]
    np.testing.assert_allclose(centers, fit.mu_hat, rtol=0, atol=1e-12)
    for iv in payload["intervals"]:
        assert iv["lower"] <= iv["center"] <= iv["upper"]


def test_spi_all_methods_run(tmp_path, unit_csv, area_csv, tube_file):
    for model, path, method, extra in [
        ("nerm", unit_csv, "mc", ["--K", "2000"]),
        ("nerm", unit_csv, "bo", []),
        ("nerm", unit_csv, "be", ["--B", "120"]),
        ("nerm", unit_csv, "vt", ["--tube-constants", str(tube_file)]),
        ("fhm", area_csv, "bs", ["--B", "120"]),
        ("fhm", area_csv, "mc", ["--K", "2000"]),
    ]:
        out = tmp_path / f"{model}-{method}.json"
        code = run_cli(
            ["spi", "--model", model, "--data", str(path), "--method", method,
             "--seed", "4", "--out", str(out)] + extra
        )
        assert code == 0, (model, method)
        payload = json.loads(out.read_text())
        assert payload["critical_value"] > 0
        if method == "be":
            assert len(payload["per_cluster_critical"]) == len(payload["intervals"])


def test_vt_rejected_for_area_model(tmp_path, area_csv, tube_file):
    # ridge scales are defined through the unit-level error variance
    code = run_cli(
        ["spi", "--model", "fhm", "--data", str(area_csv), "--method", "vt",
         "--tube-constants", str(tube_file), "--out", str(tmp_path / "x.json")]
    )
    assert code == 2
    assert not (tmp_path / "x.json").exists()


def test_stepdown_cli_matches_library(tmp_path, unit_csv):
    data = ingest_unit_csv(unit_csv)
    spec = cluster_mean_spec(data)
    fit = eblup(data, spec)
    h = fit.mu_hat + np.where(np.arange(data.D) < 2, 1.5, 0.0)
    h_path = tmp_path / "h.csv"
    h_path.write_text("\n".join(repr(float(v)) for v in h) + "\n")

    out = tmp_path / "t.json"
    code = run_cli(
        ["test", "--model", "nerm", "--data", str(unit_csv), "--h", str(h_path),
         "--method", "bs", "--B", "150", "--seed", "21", "--stepdown",
         "--out", str(out)]
    )
    assert code == 0
    payload = json.loads(out.read_text())

    draws = parametric_bootstrap(data, spec, fit, 150, 21)
    t = np.abs(fit.mu_hat - h) / np.maximum(fit.scale, SCALE_FLOOR)
    expected = step_down_test(t, stepdown_quantile_provider(draws, 0.05), 0.05)
    assert payload["rejected_indices"] == [int(i) for i in expected]
    assert payload["stepdown"] is True


def test_contrast_test_cli(tmp_path, unit_csv):
    data = ingest_unit_csv(unit_csv)
    A = np.zeros((data.D - 1, data.D))
    for i in range(data.D - 1):
        A[i, i], A[i, i + 1] = 1.0, -1.0
    a_path = tmp_path / "A.csv"
    a_path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in A) + "\n")
    out = tmp_path / "ct.json"
    code = run_cli(
        ["test", "--model", "nerm", "--data", str(unit_csv),
         "--contrasts", str(a_path), "--method", "bs", "--B", "120",
         "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["statistic"] > 0
    assert all(label.startswith("contrast") for label in payload["rejected"])


def test_contrast_stepdown_cli_matches_library(tmp_path, unit_csv):
    data = ingest_unit_csv(unit_csv)
    spec = cluster_mean_spec(data)
    fit = eblup(data, spec)
    A = np.zeros((data.D - 1, data.D))
    for i in range(data.D - 1):
        A[i, i], A[i, i + 1] = 1.0, -1.0
    # two contrasts pushed well off their nulls, the rest exactly on them
    h = A @ fit.mu_hat + np.where(np.arange(data.D - 1) < 2, 1.5, 0.0)
    a_path, h_path = tmp_path / "A.csv", tmp_path / "h.csv"
    a_path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in A) + "\n")
    h_path.write_text("\n".join(repr(float(v)) for v in h) + "\n")

    out = tmp_path / "cs.json"
    code = run_cli(
        ["test", "--model", "nerm", "--data", str(unit_csv),
         "--contrasts", str(a_path), "--h", str(h_path),
         "--method", "bs", "--B", "150", "--seed", "21", "--stepdown",
         "--out", str(out)]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["stepdown"] is True

    draws = parametric_bootstrap(data, spec, fit, 150, 21)
    scales = np.sqrt(
        np.maximum(np.maximum(fit.scale, SCALE_FLOOR) ** 2 @ (A.T**2), SCALE_FLOOR**2)
    )
    t = np.abs(A @ fit.mu_hat - h) / np.maximum(scales, SCALE_FLOOR)
    expected = step_down_test(t, stepdown_quantile_provider(draws, 0.05, A=A), 0.05)
    assert payload["rejected_indices"] == [int(i) for i in expected]

    # step-down can only add rejections over the single-step contrast test
    single = single_step_test(A @ fit.mu_hat, scales, h, critical_value_contrast(draws, A, 0.05), A=A)
    assert set(payload["rejected_indices"]) >= {int(i) for i in np.flatnonzero(single.decisions)}


def test_simulate_csv_format_and_determinism(tmp_path):
    out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    argv = [
        "simulate", "--preset", "table1-row", "--D", "10", "--sigma-e2", "0.5",
        "--sigma-u2", "1", "--I", "6", "--B", "60", "--K", "300", "--seed", "7",
    ]
    assert run_cli(argv + ["--out", str(out1)]) == 0
    assert run_cli(argv + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()

    lines = out1.read_text().strip().split("\n")
    assert lines[0] == "scenario,method,criterion,value,mc_halfwidth"
    assert len(lines) == 1 + 4 * 3  # four methods, three criteria
    for line in lines[1:]:
        scenario, method, criterion, value, hw = line.split(",")
        assert scenario == "table1-row-D10"
        assert method in ("BS", "MC", "BO", "BE")
        assert criterion in ("ecp", "ws", "vs")
        float(value), float(hw)
        # 6 significant digits max in the CSV surface
        for cell in (value, hw):
            digits = "".join(ch for ch in cell.split("e")[0] if ch.isdigit()).lstrip("0")
            assert len(digits) <= 6


def test_residuals_csv_layout(tmp_path, unit_csv):
    out = tmp_path / "r.csv"
    assert run_cli(
        ["residuals", "--model", "nerm", "--data", str(unit_csv), "--out", str(out)]
    ) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "kind,cluster,unit,value,normal_quantile"
    data = ingest_unit_csv(unit_csv)
    body = [line.split(",") for line in lines[1:]]
    chol = [row for row in body if row[0] == "cholesky"]
    eff = [row for row in body if row[0] == "random_effect"]
    assert len(chol) == data.n_total and len(eff) == data.D
    # plotting positions are a monotone relabeling of the values
    for rows in (chol, eff):
        vals = np.array([float(r[3]) for r in rows])
        quants = np.array([float(r[4]) for r in rows])
        order = np.argsort(vals)
        assert np.all(np.diff(quants[order]) > 0)


def test_transform_cli_writes_data_only_on_success(tmp_path):
    data = _positive_data()
    src = tmp_path / "pos.csv"
    src.write_text(export_unit_csv(data))
    out, out_data = tmp_path / "t.json", tmp_path / "t.csv"
    code = run_cli(
        ["transform", "--model", "nerm", "--data", str(src), "--grid", "6",
         "--out", str(out), "--out-data", str(out_data)]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["c_star"] in payload["grid"]
    assert len(payload["skewness"]) == 6
    transformed = ingest_unit_csv(out_data)
    np.testing.assert_allclose(
        transformed.y, np.log(data.y + payload["c_star"]), rtol=0, atol=1e-15
    )

    # a grid candidate that makes y + c nonpositive must leave no files
    bad_out, bad_data = tmp_path / "bad.json", tmp_path / "bad.csv"
    code = run_cli(
        ["transform", "--model", "nerm", "--data", str(src), "--grid",
         f"{-2 * float(data.y.max())}", "--out", str(bad_out),
         "--out-data", str(bad_data)]
    )
    assert code == 2
    assert not bad_out.exists() and not bad_data.exists()


def test_fit_payload_fields(tmp_path, area_csv):
    out = tmp_path / "fit.json"
    assert run_cli(
        ["fit", "--model", "fhm", "--data", str(area_csv), "--out", str(out)]
    ) == 0
    payload = json.loads(out.read_text())
    assert payload["sigma2_e"] is None  # area model has known error variances
    assert payload["sigma2_u"] > 0
    assert len(payload["clusters"]) == payload["D"]
    assert {"cluster", "n", "mu_hat", "u_hat", "scale"} <= set(payload["clusters"][0])


def test_exit_codes_and_error_json(tmp_path, unit_csv, tube_file):
    # usage: unknown option, bad combination
    assert run_cli(["spi", "--nope"]) == 1
    assert run_cli(
        ["spi", "--model", "nerm", "--data", str(unit_csv), "--method", "vt"]
    ) == 1
    assert run_cli(
        ["test", "--model", "nerm", "--data", str(unit_csv), "--method", "bs"]
    ) == 1
    assert run_cli(
        ["test", "--model", "nerm", "--data", str(unit_csv), "--method", "mc",
         "--h", "x.csv", "--stepdown"]
    ) == 1
    assert run_cli(
        ["fit", "--model", "nerm", "--data", str(unit_csv),
         "--out", str(tmp_path / "no_such_dir" / "x.json")]
    ) == 1

    # computation: missing file, with machine-readable report
    err_path = tmp_path / "err.json"
    code = run_cli(
        ["fit", "--model", "nerm", "--data", str(tmp_path / "absent.csv"),
         "--error-json", str(err_path)]
    )
    assert code == 2
    report = json.loads(err_path.read_text())
    assert report["error"] == "ParseError"
    assert "absent.csv" in report["message"]


def test_generated_scenario_survives_csv_round_trip(tmp_path):
    config = ScenarioConfig(D=10, n_d=3, n_sim=1, master_seed=31)
    data, _, _ = generate_scenario(config, 0)
    path = tmp_path / "gen.csv"
    path.write_text(export_unit_csv(data))
    back = ingest_unit_csv(path)
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.X, data.X)
    # identifiers come back as text; re-export is the fixed point
    assert export_unit_csv(back) == path.read_text()
