import csv
import json
import shutil

import numpy as np
import pytest

from commodity_backtest.cli import main, write_outputs
from commodity_backtest.config import CONFIG_ENV
from commodity_backtest.ingest import TOPICS, load_headlines, simple_returns
from commodity_backtest.regimes import regime_report
from commodity_backtest.topics import topic_portfolio

from conftest import months_from


def month_end(m):
    return f"{m}-28"


def write_market(d, closes, start="2010-01", headlines=(), features=None):
    months = months_from(start, len(closes))
    lines = ["date,close" + ("".join(f",{k}" for k in features) if features else "")]
    for i, (m, c) in enumerate(zip(months, closes)):
        extra = "".join(f",{features[k][i]}" for k in features) if features else ""
        lines.append(f"{month_end(m)},{c}{extra}")
    (d / "prices.csv").write_text("\n".join(lines) + "\n")
    with (d / "headlines.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "source", "text", "sentiment", "topic", "event_type"])
        for row in headlines:
            w.writerow(row)
    return months


def write_config(d, body):
    p = d / "config.toml"
    p.write_text(body)
    return p


def random_market(d, n=60, seed=0, topics=TOPICS, sources=("reuters", "dowjones", "chinaservice")):
    rng = np.random.default_rng(seed)
    closes = (2000 * np.exp(np.cumsum(rng.normal(0.003, 0.05, n)))).round(2).tolist()
    months = months_from("2008-01", n)
    heads = []
    for m in months:
        for k in range(int(rng.integers(0, 5))):
            heads.append((f"{m}-{k + 10}", sources[rng.integers(len(sources))], f"h{m}{k}",
                          ["positive", "neutral", "negative"][rng.integers(3)],
                          topics[rng.integers(len(topics))], ["forward_looking", "occurred"][rng.integers(2)]))
    fx = rng.normal(7, 0.1, n).round(4).tolist()
    write_market(d, closes, "2008-01", heads, {"usdcny": fx})
    return closes


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- backtest ---------------------------------------------------------------

def test_backtest_buy_and_hold(tmp_path, capsys):
    write_market(tmp_path, [100.0, 120.0, 90.0])
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\n[strategy]\nkind = "buy_and_hold"\n')
    code, out, _ = run(capsys, "backtest", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "o" / "path.csv").open()))
    assert [float(r["value"]) for r in rows] == pytest.approx([100.0, 120.0, 90.0], rel=1e-12)
    tsv = (tmp_path / "o" / "plot.tsv").read_text().splitlines()
    assert tsv[0] == "month\tportfolio_value\tprice_index"
    for line in tsv[1:]:
        _, v, p = line.split("\t")
        assert float(v) == pytest.approx(float(p), rel=1e-12)


def test_backtest_sentiment_feb_2020(tmp_path, capsys, demo_dir):
    (tmp_path / "prices.csv").write_text("date,close\n2020-02-28,1940.50\n2020-03-31,1759.43\n")
    heads = [h for h in (demo_dir / "headlines.csv").read_text().splitlines()[1:] if h.startswith("2020-02")]
    (tmp_path / "headlines.csv").write_text("date,source,text,sentiment\n" + "\n".join(heads) + "\n")
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nheadlines = "headlines.csv"\n[strategy]\nkind = "sentiment_only"\n')
    code, _, _ = run(capsys, "backtest", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "o" / "path.csv").open()))
    assert rows[1]["signal"] == "-1"
    assert 100 * float(rows[1]["period_return"]) == pytest.approx(9.33, abs=0.01)
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["n_months"] == 1 and report["status"] == "insufficient data"


@pytest.mark.parametrize("preds,sign", [("predictions_sentiment.csv", 1), ("predictions_tabular.csv", -1)])
def test_backtest_worked_example_replay(tmp_path, capsys, demo_dir, preds, sign):
    for f in demo_dir.glob("*.csv"):
        shutil.copy(f, tmp_path)
    cfg = write_config(tmp_path, f'[data]\nprices = "prices.csv"\npredictions = "{preds}"\n[ingest]\nallow_gaps = true\n[strategy]\nkind = "price_based"\n')
    code, _, err = run(capsys, "backtest", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    rows = list(csv.DictReader((tmp_path / "o" / "path.csv").open()))[1:]
    got = [100 * float(r["period_return"]) for r in rows]
    assert got == pytest.approx([sign * 9.33, sign * 9.64, sign * 8.97], abs=0.01)


def test_backtest_walk_forward_forecaster(tmp_path, capsys):
    random_market(tmp_path, n=40)
    cfg = write_config(tmp_path, """
[data]
prices = "prices.csv"
headlines = "headlines.csv"
[strategy]
kind = "combined"
[filter]
sources = ["reuters"]
[forecaster]
family = "ridge_window"
window = 3
initial_train = 8
[forecaster.hyperparams]
penalty = 1.0
""")
    code, _, err = run(capsys, "backtest", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["metadata"]["forecaster"]["feature_set"] == "tabular+reuters"
    preds = (tmp_path / "o" / "predictions.csv").read_text().splitlines()
    assert len(preds) - 1 == 40 - 3 - 8


def test_backtest_failure_leaves_no_files(tmp_path, capsys):
    write_market(tmp_path, [100.0, 120.0, 90.0])
    (tmp_path / "bad.csv").write_text("month,predicted_close\n2010-02,-5\n")
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\npredictions = "bad.csv"\n[strategy]\nkind = "price_based"\n')
    code, _, err = run(capsys, "backtest", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 2 and "positive" in err
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_write_outputs_atomic(tmp_path):
    files = {"a.txt": "one", "b.txt": None}
    with pytest.raises(TypeError):
        write_outputs(tmp_path, files)
    assert list(tmp_path.iterdir()) == []


# -- regimes ----------------------------------------------------------------

def test_regimes_constant_volatility(tmp_path, capsys):
    write_market(tmp_path, [100.0] * 20)
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\n[strategy]\nkind = "buy_and_hold"\n')
    code, out, err = run(capsys, "regimes", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    payload = json.loads((tmp_path / "o" / "regime_reports.json").read_text())
    populated = [k for k, v in payload["counts"].items() if v]
    assert populated == ["low"]


def test_regimes_threshold_echo(tmp_path, capsys):
    write_market(tmp_path, [100.0, 101.0, 99.0, 102.0])
    (tmp_path / "vol.csv").write_text("month,volatility\n2010-02,0.0113\n2010-03,0.25\n2010-04,0.3747\n")
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nvolatility = "vol.csv"\n[strategy]\nkind = "buy_and_hold"\n')
    code, out, _ = run(capsys, "regimes", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0
    assert "thresholds: low/medium 8.40%  medium/high 19.30%" in out


def test_regimes_table_matches_direct(tmp_path, capsys):
    random_market(tmp_path, n=70, seed=3)
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nheadlines = "headlines.csv"\n[strategy]\nkind = "sentiment_only"\n[regimes]\nstrategies = ["sentiment_only", "buy_and_hold"]\n')
    code, _, err = run(capsys, "regimes", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    table = list(csv.DictReader((tmp_path / "o" / "regime_table.csv").open()))
    assert len(table) == 6
    regimes = {r["month"]: r["regime"] for r in csv.DictReader((tmp_path / "o" / "regimes.csv").open())}
    from commodity_backtest.config import load_config
    from commodity_backtest.pipeline import load_market, run_strategy
    from commodity_backtest.regimes import partition_from_returns
    c = load_config(cfg)
    data = load_market(c, True)
    part = partition_from_returns(data.returns)
    assert part.labels == regimes
    for kind in ("sentiment_only", "buy_and_hold"):
        rep = regime_report(run_strategy(c, kind, data).path, part)
        for row in (r for r in table if r["strategy"] == kind):
            direct = rep[row["regime"]].sharpe
            assert (row["sharpe"] == "" and direct is None) or float(row["sharpe"]) == direct


# -- topics -----------------------------------------------------------------

def test_topics_default_range(tmp_path, capsys):
    random_market(tmp_path, n=40, seed=4)
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nheadlines = "headlines.csv"\n')
    code, out, err = run(capsys, "topics", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    assert "candidates: 4094" in out
    assert len((tmp_path / "o" / "subsets.csv").read_text().splitlines()) == 4095
    code, out, _ = run(capsys, "topics", "--config", str(cfg), "--out-dir", str(tmp_path / "o2"), "--subset-sizes", "2-11")
    assert "candidates: 4082" in out


def test_topics_three_topic_corpus_brute_force(tmp_path, capsys):
    import itertools

    three = TOPICS[:3]
    random_market(tmp_path, n=40, seed=5, topics=three, sources=("reuters",))
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nheadlines = "headlines.csv"\n')
    code, out, err = run(capsys, "topics", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    heads = load_headlines(tmp_path / "headlines.csv")
    from commodity_backtest.config import load_config
    from commodity_backtest.pipeline import load_market
    rets = load_market(load_config(cfg), True).returns
    scored = [(topic_portfolio(heads, s, rets).sharpe, s) for k in (1, 2, 3) for s in itertools.combinations(three, k)]
    best_sr, best = max((x for x in scored if x[0] is not None), key=lambda x: x[0])
    top = next(csv.DictReader((tmp_path / "o" / "subsets.csv").open()))
    assert tuple(top["subset"].split("|")) == best
    assert float(top["sharpe"]) == best_sr
    assert f"best subset: {', '.join(best)}" in out


def test_topics_unlabeled_corpus_errors(tmp_path, capsys, demo_dir):
    shutil.copy(demo_dir / "headlines.csv", tmp_path)
    (tmp_path / "prices.csv").write_text("date,close\n2020-01-31,1\n2020-02-28,2\n2020-03-31,3\n")
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nheadlines = "headlines.csv"\n')
    code, _, err = run(capsys, "topics", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 2 and "topic" in err
    assert not (tmp_path / "o").exists()


# -- grid -------------------------------------------------------------------

GRID_BASE = """
[data]
prices = "prices.csv"
headlines = "headlines.csv"
[forecaster]
initial_train = 8
"""


def test_grid_single_cell(tmp_path, capsys):
    random_market(tmp_path, n=30)
    cfg = write_config(tmp_path, GRID_BASE + '[grid]\nwindows = [3]\n[[grid.families]]\nname = "ar"\nfamily = "ar_ls"\n[grid.families.hyperparams]\norder = 1\n')
    code, out, err = run(capsys, "grid", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    assert "cells: 1" in out
    assert len((tmp_path / "o" / "grid_best.csv").read_text().splitlines()) == 2


def test_grid_counting(tmp_path, capsys):
    random_market(tmp_path, n=30)
    cfg = write_config(tmp_path, GRID_BASE + """
[grid]
windows = [1, 3]
[[grid.families]]
name = "ridge"
family = "ridge_window"
[grid.families.hyperparams]
penalty = 1.0
[grid.families.grid]
penalty = [0.1, 1.0, 10.0]
[[grid.families]]
name = "ar"
family = "ar_ls"
[grid.families.hyperparams]
order = 1
[grid.families.grid]
intercept = [true, false, true]
""")
    code, out, err = run(capsys, "grid", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    assert "cells: 12" in out and "best-per-group rows: 4" in out
    assert len((tmp_path / "o" / "grid_cells.csv").read_text().splitlines()) == 13


FULL_GRID = GRID_BASE + """
[grid]
windows = [1, 3, 6, 12]
feature_sets = ["tabular", "tabular+reuters", "tabular+dowjones", "tabular+chinaservice"]
""" + "".join(f"""
[[grid.families]]
name = "{n}"
family = "persistence"
[grid.families.grid]
hidden_size = [16, 32, 64, 128, 256]
num_layers = [1, 2, 3, 4, 5, 6]
""" for n in ("lstm", "bilstm", "convlstm", "gru", "tft"))


def test_grid_full_scale_shape(tmp_path, capsys):
    random_market(tmp_path, n=30)
    cfg = write_config(tmp_path, FULL_GRID)
    code, out, err = run(capsys, "grid", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0, err
    assert "cells: 2400" in out and "best-per-group rows: 80" in out


# -- validate, usage, env ---------------------------------------------------

def test_validate(tmp_path, capsys, demo_dir):
    code, out, _ = run(capsys, "validate", "--config", str(demo_dir / "config.toml"))
    assert code == 0 and "headlines: 27 rows" in out and out.strip().endswith("ok")
    (tmp_path / "prices.csv").write_text("date,close\n2020-01-01,x\n")
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\n')
    code, _, err = run(capsys, "validate", "--config", str(cfg))
    assert code == 2 and ":2:" in err


def test_usage_errors(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert run(capsys, "backtest")[0] == 1
    assert run(capsys, "nonsense")[0] == 1
    assert run(capsys, "backtest", "--config", str(tmp_path / "missing.toml"))[0] == 1
    cfg = write_config(tmp_path, '[bogus]\nx = 1\n')
    assert run(capsys, "backtest", "--config", str(cfg))[0] == 1


def test_config_from_env(tmp_path, capsys, monkeypatch):
    write_market(tmp_path, [100.0, 120.0, 90.0])
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\n[strategy]\nkind = "buy_and_hold"\n[output]\ndir = "envout"\n')
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    assert run(capsys, "backtest")[0] == 0
    assert (tmp_path / "envout" / "report.json").exists()


def test_strategy_flag_overrides_config(tmp_path, capsys):
    random_market(tmp_path, n=20)
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\nheadlines = "headlines.csv"\n[strategy]\nkind = "sentiment_only"\n')
    code, out, _ = run(capsys, "backtest", "--config", str(cfg), "--strategy", "buy_and_hold", "--out-dir", str(tmp_path / "o"))
    assert code == 0 and "strategy: buy_and_hold" in out


def test_computation_error_exit_code(tmp_path, capsys):
    write_market(tmp_path, [100.0, 101.0, 102.0])
    cfg = write_config(tmp_path, '[data]\nprices = "prices.csv"\n[strategy]\nkind = "buy_and_hold"\n[regimes]\nfractions = [0.6, 0.2]\n')
    (tmp_path / "vol.csv").write_text("month,volatility\n2010-02,0.1\n2010-03,0.2\n")
    cfg.write_text(cfg.read_text().replace("[strategy]", 'volatility = "vol.csv"\n[strategy]'))
    code, _, err = run(capsys, "regimes", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 3 and "fractions" in err
