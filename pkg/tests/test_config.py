"""Config file parsing and typed access."""

import pytest

from hashscreen.config import (
    check_known_keys,
    get_float,
    get_int,
    get_str,
    load_config,
    parse_config_text,
)
from hashscreen.errors import InvalidInputError, ParseError


def test_parse_basics():
    text = "\n".join(
        [
            "# a comment",
            "",
            "lambda = 0.2",
            "epochs=30",
            "name = run one  ",
            "   # indented comment",
        ]
    )
    cfg = parse_config_text(text)
    assert cfg == {"lambda": "0.2", "epochs": "30", "name": "run one"}


def test_parse_errors_carry_source_and_line():
    with pytest.raises(ParseError, match=r"run\.cfg:2"):
        parse_config_text("a = 1\nnot a pair\n", source="run.cfg")
    with pytest.raises(ParseError, match=r"<config>:1: empty key"):
        parse_config_text("= 3\n")
    with pytest.raises(ParseError, match="duplicate key 'a'"):
        parse_config_text("a = 1\na = 2\n")


def test_value_may_contain_equals():
    cfg = parse_config_text("expr = a=b\n")
    assert cfg["expr"] == "a=b"


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 5\n")
    assert load_config(str(path)) == {"epochs": "5"}


def test_typed_accessors():
    cfg = {"lambda": "0.2", "epochs": "30", "name": "x"}
    assert get_float(cfg, "lambda") == 0.2
    assert get_int(cfg, "epochs") == 30
    assert get_str(cfg, "name") == "x"
    assert get_float(cfg, "missing", 1.5) == 1.5
    assert get_int(cfg, "missing") is None
    with pytest.raises(InvalidInputError, match="'epochs'"):
        get_int({"epochs": "thirty"}, "epochs")
    with pytest.raises(InvalidInputError, match="'lambda'"):
        get_float({"lambda": "a"}, "lambda")


def test_check_known_keys():
    check_known_keys({"a": "1"}, {"a", "b"}, "run.cfg")
    with pytest.raises(InvalidInputError, match="run.cfg: unknown config key"):
        check_known_keys({"zz": "1"}, {"a"}, "run.cfg")
