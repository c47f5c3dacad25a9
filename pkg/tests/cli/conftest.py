import csv
import io
import json
from typing import Callable, Dict, List, Tuple

import pytest

from src.main import main


@pytest.fixture
def run_cli(capsys) -> Callable[..., Tuple[int, str]]:
    """
    Run the command line in-process and capture stdout
    """

    def _run(*argv: str) -> Tuple[int, str]:
        code = main(list(argv))
        return code, capsys.readouterr().out

    return _run


def parse_csv(text: str) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    """Split command CSV into its "# key=value" provenance and data rows"""
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, value = line[2:].split("=", 1)
            meta[key] = value
        else:
            body.append(line)
    return meta, list(csv.DictReader(io.StringIO("\n".join(body))))


@pytest.fixture
def csv_output() -> Callable[[str], Tuple[Dict[str, str], List[Dict[str, str]]]]:
    return parse_csv


@pytest.fixture
def json_output() -> Callable[[str], dict]:
    return json.loads
