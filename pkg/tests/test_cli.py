import json
import subprocess
import sys

import pytest

from predmarket.cli import dispatch
from predmarket.flow import simulate_censored_stream
from predmarket.market_core import aggregated_csv_text


def read_json(path):
    return json.loads(path.read_text())


def test_eval(tmp_path):
    out = tmp_path / "e.json"
    assert dispatch(["eval", "--lambda", "-2", "--q", "0.5", "--pi", "0.5", "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["theta_plus"] == pytest.approx(0.2689414213699951, abs=1e-12)
    assert doc["U_plus"] == pytest.approx(1.859140914229522618, abs=1e-12)
    assert doc["BuyAdmissible"] and doc["SellAdmissible"]


def test_simulate_reproducible_with_config_header(tmp_path):
    argv = ["simulate", "--mu", "0.261", "--sigma", "0.003", "--q", "0.247", "--rho-plus", "0.01",
            "--rho-minus", "0.999", "--votes", "5000", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert dispatch(argv + ["--out", str(a)]) == 0
    assert dispatch(argv + ["--out", str(b)]) == 0
    def strip_out(path):
        return [ln for ln in path.read_text().splitlines() if not ln.startswith("# out:")]

    assert strip_out(a) == strip_out(b)
    lines = a.read_text().splitlines()
    assert "# seed: 7" in lines and "# mu: 0.261" in lines
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "vote,difference" and len(body) == 5001


def test_stochastic_commands_need_seed(tmp_path, capsys):
    argv = ["simulate", "--mu", "0.261", "--sigma", "0.003", "--q", "0.247", "--rho-plus", "0.01",
            "--rho-minus", "0.999", "--votes", "10"]
    assert dispatch(argv) == 2
    assert "--seed" in capsys.readouterr().err


def test_usage_and_domain_errors(tmp_path):
    assert dispatch(["estimate", "--bogus"]) == 2
    assert dispatch([]) == 2
    assert dispatch(["eval", "--lambda", "-1", "--q", "1.5"]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("q,s_plus,s_minus\n1.2,1,1\n")
    assert dispatch(["ingest", "--input", str(bad)]) == 1
    assert dispatch(["ingest", "--input", str(tmp_path / "missing.csv")]) == 1


def test_ingest_depth_snapshot(tmp_path, data_dir):
    out = tmp_path / "t2.json"
    assert dispatch(["ingest", "--input", str(data_dir / "book_depth.csv"), "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["summary"][0]["bid"] == 0.4902 and doc["summary"][0]["ask"] == 0.5


def test_estimate_end_to_end(tmp_path):
    stream = simulate_censored_stream(0.26, [0.02, 0.01], 5000, seed=2, snapshots_per_batch=2)
    src = tmp_path / "snaps.csv"
    src.write_text(aggregated_csv_text(stream))
    out = tmp_path / "series.json"
    assert dispatch(["estimate", "--input", str(src), "--volume-step", "2500", "--out", str(out)]) == 0
    recs = read_json(out)["records"]
    assert len(recs) == 4
    assert set(recs[0]) == {"nu", "t", "mu", "sigma", "lambda", "loglik", "converged", "boundary"}
    assert abs(recs[-1]["mu"] - 0.26) < 0.005
    csv_out = tmp_path / "series.csv"
    assert dispatch(["estimate", "--input", str(src), "--volume-step", "2500", "--out", str(csv_out)]) == 0
    assert "nu,t,mu,sigma,lambda,loglik,converged,boundary" in csv_out.read_text()


def test_simulate_book(tmp_path, data_dir):
    out = tmp_path / "book.csv"
    argv = ["simulate-book", "--mu", "0.2626", "--sigma", "0.0067", "--rho", "6,-0.85,-27,-0.8",
            "--counts", str(data_dir / "vote_layout.csv"), "--seed", "1", "--out", str(out)]
    assert dispatch(argv) == 0
    rows = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "q,v_plus,v_minus,s_plus,s_minus" and len(rows) == 20


def test_boolean_market(tmp_path, data_dir):
    out = tmp_path / "b.json"
    assert dispatch(["boolean-market", "--spec", str(data_dir / "xyz.json"), "--trace", "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["k_inf"] == 2 and doc["final_price"] == 1.0 and len(doc["rounds"]) == 2


def test_self_resolving(tmp_path, data_dir):
    out = tmp_path / "s.json"
    assert dispatch(["self-resolving", "--spec", str(data_dir / "xyz_sr.json"), "--audit", "2",
                     "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["k_inf"] == 3 and doc["pool"] == ["Y", "Z"]
    assert doc["audit"]["silent_profit"] == 0.0 and doc["audit"]["share_profit_sign"] == 1
    assert sum(doc["payouts"].values()) == pytest.approx(0.0, abs=1e-12)
    assert dispatch(["self-resolving", "--spec", str(data_dir / "xyz_sr.json"), "--settle", "bernoulli"]) == 1


def test_console_entry_point(tmp_path, data_dir):
    res = subprocess.run([sys.executable, "-m", "predmarket.cli", "boolean-market", "--spec",
                          str(data_dir / "xyz.json")], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["k_inf"] == 2
