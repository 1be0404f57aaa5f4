"""Smoke test for the vcass_py extension.

Loads the library named by VCASS_PY_LIB, else an installed module, else the
library that `cargo build -p vcass-py` leaves in target/debug.
"""

import importlib
import importlib.util
import os
import pathlib
import sys


def load_file(lib):
    spec = importlib.util.spec_from_file_location("vcass_py", lib)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def load():
    if os.environ.get("VCASS_PY_LIB"):
        return load_file(os.environ["VCASS_PY_LIB"])
    try:
        return importlib.import_module("vcass_py")
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parents[3]
    for name in ("libvcass_py.so", "libvcass_py.dylib", "vcass_py.dll"):
        lib = root / "target" / "debug" / name
        if lib.exists():
            return load_file(lib)
    sys.exit("vcass_py not built; run `cargo build -p vcass-py` first")


def records(ppt, nnt):
    rows = []
    for intent, agree in (("positive", ppt), ("negative", nnt)):
        other = "negative" if intent == "positive" else "positive"
        for i in range(1000):
            rows.append({
                "video_id": f"{intent}-{i}",
                "participant_id": "p",
                "intent": intent,
                "judged_tendency": intent if i < agree else other,
                "condition": "aligned",
            })
    return rows


def main():
    v = load()

    assert v.kb_query("smooth lines")[0]["rule_id"] == "line-smooth-calm"
    assert v.kb_query("harsh light and heavy shadow")[0]["rule_id"] == "light-harsh-fear"

    table = v.tendency_table(records(911, 688), "aligned")
    assert round(table["consistent"], 4) == 0.7995, table

    choices = [
        {"participant_id": f"p{i}", "video_id": "v", "chosen": "expressive" if i < 118 else "neutral"}
        for i in range(158)
    ]
    assert v.preference_rate(choices)["percent"] == "74.68%"
    assert v.percent_string(118, 158) == "74.68%"

    assert v.uniform_indices(250, 3) == [0, 125, 249]
    text = v.render_instruction({"tone": "warm and cheerful"}, "A festive evening.", "Lanterns glow.")
    assert "Lanterns glow." in text and "warm and cheerful" in text

    e = v.mock_embedding("warm festival lights")
    assert abs(v.cosine(e, e) - 1.0) < 1e-9
    assert v.categorize_pleasure(0.5, 0.1) == "positive"
    assert v.categorize_pleasure(0.05, 0.1) is None

    try:
        v.tendency_table([r for r in records(900, 900) if r["intent"] == "positive"], "aligned")
    except ValueError as err:
        assert "negative" in str(err)
    else:
        raise AssertionError("missing intent group accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
