"""In-tree PEP 517 backend.

The repository's setup.py is a first-run helper (it writes config.json and
the output directory), not a setuptools script. This wraps setuptools'
build_meta so packaging reads pyproject.toml only and never executes it.
"""

from setuptools import build_meta as _orig


class _Backend(_orig._BuildMetaBackend):
    def run_setup(self, setup_script="setup.py"):
        from setuptools import setup

        setup()


_backend = _Backend()

get_requires_for_build_wheel = _backend.get_requires_for_build_wheel
get_requires_for_build_sdist = _backend.get_requires_for_build_sdist
prepare_metadata_for_build_wheel = _backend.prepare_metadata_for_build_wheel
build_wheel = _backend.build_wheel
build_sdist = _backend.build_sdist
get_requires_for_build_editable = _backend.get_requires_for_build_editable
prepare_metadata_for_build_editable = _backend.prepare_metadata_for_build_editable
build_editable = _backend.build_editable
