import json

import pytest

from conftest import random_bn
from multitrait_bn.errors import DataError
from multitrait_bn.graph import SNP, TRAIT, Dag, Node
from multitrait_bn.modelfile import ModelFile, to_dot


def test_round_trip_is_lossless(rng, tmp_path):
    for _ in range(10):
        bn = random_bn(rng, 7)
        mf = ModelFile.from_bn(bn, {"alpha": 0.05, "seed": 3}, {("S0", "T1"): 0.37})
        mf.save(tmp_path / "m.json")
        back = ModelFile.load(tmp_path / "m.json")
        assert back.bn == bn  # dataclass equality compares every float exactly
        assert back.metadata == {"alpha": 0.05, "seed": 3}
        assert back.strengths == {("S0", "T1"): 0.37}
        assert back.to_json() == mf.to_json()


def test_structure_only_file(tmp_path):
    dag = Dag((Node("s", SNP), Node("t")), frozenset({("s", "t")}))
    ModelFile(dag).save(tmp_path / "m.json")
    back = ModelFile.load(tmp_path / "m.json")
    assert back.dag == dag and not back.has_parameters


def test_bad_files(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(DataError):
        ModelFile.load(p)
    p.write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(DataError, match="schema"):
        ModelFile.load(p)
    with pytest.raises(DataError, match="not found"):
        ModelFile.load(tmp_path / "missing.json")


def test_dot_colours_and_strength_labels():
    dag = Dag((Node("s\"1", SNP), Node("t", TRAIT, 1)), frozenset({('s"1', "t")}))
    text = to_dot(dag, {('s"1', "t"): 0.75})
    assert text.startswith('digraph "bn" {')
    assert '"s\\"1" [shape=box, fillcolor=lightblue];' in text
    assert '"t" [shape=ellipse, fillcolor=green, tier=1];' in text
    assert '"s\\"1" -> "t" [penwidth=4, label="0.75"];' in text
    assert "label" not in to_dot(dag)
