import numpy as np
import pytest

from mvbern.schema import Variable, VariableSchema


def small_schema(n_binary: int = 4, group: int = 3) -> VariableSchema:
    """Binary variables followed by one one-hot group (if ``group`` > 0)."""
    vs = [Variable(f"b{i}") for i in range(n_binary)]
    vs += [Variable(f"g{i}", "level", "g") for i in range(group)]
    return VariableSchema(tuple(vs))


def binary_schema(k: int) -> VariableSchema:
    return VariableSchema.from_spec([f"x{i}" for i in range(k)])


def codes_from_strings(strings, schema):
    return schema.pack(np.array([[int(c) for c in s] for s in strings], dtype=np.uint8))


@pytest.fixture
def tiny():
    """The four-record k=2 table {11, 10, 11, 00}."""
    schema = binary_schema(2)
    return schema, codes_from_strings(["11", "10", "11", "00"], schema)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num} [{status}] {title}: {detail}")
