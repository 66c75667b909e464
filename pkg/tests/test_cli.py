import json

import pytest

from penaltysim.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- rates -------------------------------------------------------------------

def test_rates_conversion(capsys):
    code, out, _ = run_cli(capsys, "rates", "--bps", "238")
    assert code == 0
    assert "year 0.0235212" in out
    assert "minute 4.47511e-08" in out


def test_rates_json_full_precision(capsys):
    code, out, _ = run_cli(capsys, "rates", "--bps", "238", "--format",
                           "json")
    data = json.loads(out)
    assert data["year"] == pytest.approx(0.023521195041345866)


# --- simulate ------------------------------------------------------------------

def test_simulate_ladder4_row_count(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--protocol", "ladder",
                           "--n", "4")
    assert code == 0
    lines = out.strip().split("\n")
    assert len(lines) == 11
    assert lines[0] == "protocol,n,stages,party,round,kind,amount_q"


def test_simulate_ml2_row_count(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--protocol", "ml", "--n", "2")
    assert len(out.strip().split("\n")) == 5  # header + 4 events


def test_simulate_abort_adjusts_schedule(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--protocol", "ladder",
                           "--n", "4", "--abort", "3@claim")
    rows = [line.split(",") for line in out.strip().split("\n")[1:]]
    net = {p: 0 for p in "1234"}
    for _, _, _, party, _, kind, amount in rows:
        net[party] += int(amount) if kind == "refund" else -int(amount)
    assert net == {"1": 1, "2": 1, "3": -2, "4": 0}


def test_simulate_deterministic(capsys):
    _, first, _ = run_cli(capsys, "simulate", "--protocol", "pl", "--n", "9",
                          "--stages", "2")
    _, second, _ = run_cli(capsys, "simulate", "--protocol", "pl", "--n", "9",
                           "--stages", "2")
    assert first == second


# --- fairness ------------------------------------------------------------------

def test_fairness_ladder_unfair_witness(capsys):
    code, out, _ = run_cli(capsys, "fairness", "--protocol", "ladder",
                           "--n", "55")
    data = json.loads(out)
    assert code == 0
    assert data["verdict"] == "Unfair"
    assert data["witness_pair"] == [1, 2]


def test_fairness_multilock_fair(capsys):
    _, out, _ = run_cli(capsys, "fairness", "--protocol", "ml", "--n", "5")
    assert json.loads(out)["verdict"] == "Fair"


# --- efficiency / figures --------------------------------------------------------

def test_efficiency_report(capsys):
    code, out, _ = run_cli(capsys, "efficiency", "--protocol", "ll",
                           "--n", "55", "--stages", "2", "--format", "json")
    data = json.loads(out)
    assert data["tx_count"] == 12312
    assert data["rounds"] == 543
    assert data["exec_days"] == 23


def test_figures_emit_csvs(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "figures", "--out", str(tmp_path))
    assert code == 0
    for name in ("fig5.csv", "fig6.csv", "fig7.csv", "fig8.csv",
                 "fig10.csv"):
        assert (tmp_path / name).exists()
    fig7 = (tmp_path / "fig7.csv").read_text()
    assert "ML,55,21120" in fig7
    fig8 = (tmp_path / "fig8.csv").read_text()
    assert "PL,55,327" in fig8
    fig10 = (tmp_path / "fig10.csv").read_text()
    assert fig10.splitlines()[0] == "protocol,party,chi_bps"


def test_figures_deterministic(tmp_path, capsys):
    run_cli(capsys, "figures", "--out", str(tmp_path / "a"))
    run_cli(capsys, "figures", "--out", str(tmp_path / "b"))
    for name in ("fig5.csv", "fig6.csv", "fig7.csv", "fig8.csv",
                 "fig10.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


# --- demos -----------------------------------------------------------------------

def test_cml_demo_with_adversary(capsys):
    code, out, _ = run_cli(capsys, "cml-demo", "--parties", "3",
                           "--adversary", "redeem-abort:3", "--seed", "1")
    assert code == 0
    assert "P1: compensated" in out
    assert "P3: penalized" in out
    assert "CML,3,1" in out


def test_cml_demo_deterministic(capsys):
    _, a, _ = run_cli(capsys, "cml-demo", "--parties", "4", "--seed", "7")
    _, b, _ = run_cli(capsys, "cml-demo", "--parties", "4", "--seed", "7")
    assert a == b


def test_btc_demo_scenarios(capsys):
    code, out, _ = run_cli(capsys, "btc-demo", "--parties", "3",
                           "--scenario", "abort:2")
    assert code == 0
    assert "P1 net +1000" in out
    assert "P2 net -2000" in out
    code, out, _ = run_cli(capsys, "btc-demo", "--scenario", "malleate")
    assert "dependent valid under segwit True" in out
    assert "dependent valid under legacy False" in out


# --- error handling ---------------------------------------------------------------

def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--protocol", "ladder"])  # missing --n
    assert exc.value.code == 2


def test_domain_error_exits_3(capsys):
    code, _, err = run_cli(capsys, "simulate", "--protocol", "ladder",
                           "--n", "1")
    assert code == 3
    assert "error" in err


def test_unknown_protocol_exits_3(capsys):
    code, _, _ = run_cli(capsys, "simulate", "--protocol", "bogus", "--n",
                         "4")
    assert code == 3


def test_config_file_defaults(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"q": 3}))
    _, out, _ = run_cli(capsys, "simulate", "--protocol", "ml", "--n", "2",
                        "--config", str(config))
    assert "ML,2,1,1,1,deposit,1" in out  # amount_q normalizes by q=3


def test_flags_override_config(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"format": "json"}))
    _, out, _ = run_cli(capsys, "rates", "--bps", "0", "--config",
                        str(config))
    assert json.loads(out)["year"] == 0.0
