import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

TREE_SRC = """\
struct tree_node {
  int id;       // id of the node, critical
  struct tree_node *r; // pointer to the right child, critical
  struct tree_node *l; // pointer to the left child, critical
  double score; // score of this node, approximate
};
"""

# arc as in mcf: three 8-byte members precede ident
MCF_SRC = """\
typedef long cost_t;
typedef long flow_t;
typedef struct node node_t;
typedef struct arc arc_t;
struct arc {
  cost_t cost;
  node_t *tail, *head;
  int ident;
  arc_t *nextout, *nextin;
  flow_t flow;
  cost_t org_cost;
};
"""

COMPLEX_SRC = "struct complex { double real; double imag; };"


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def fixtures_dir():
    return Path(__file__).parent / "data"



# one PASS/FAIL line per acceptance criterion, printed after the run
_CRITERIA = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    crit = props.get("criterion")
    if crit is None or (report.outcome == "passed" and report.when != "call"):
        return
    if report.outcome == "passed":
        _CRITERIA.setdefault(crit, (True, props.get("detail", "")))
    else:
        crash = getattr(report.longrepr, "reprcrash", None)
        msg = crash.message if crash is not None else report.outcome
        _CRITERIA[crit] = (False, msg.splitlines()[0])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        ok, detail = _CRITERIA[crit]
        terminalreporter.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
