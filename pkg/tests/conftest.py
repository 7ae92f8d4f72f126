import pathlib

import pytest

GOLDEN_DIR = pathlib.Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--update-goldens", action="store_true", default=False,
                     help="rewrite the golden regression files")


@pytest.fixture()
def golden_compare(request):
    """Compare text against a stored golden file (or refresh it)."""
    update = request.config.getoption("--update-goldens")

    def compare(name: str, text: str):
        path = GOLDEN_DIR / name
        if update:
            GOLDEN_DIR.mkdir(exist_ok=True)
            path.write_text(text)
            return
        assert path.exists(), (
            f"golden file {name} missing; run pytest --update-goldens")
        stored = path.read_bytes().decode()
        assert stored == text, f"{name} drifted from its golden copy"

    return compare
