"""Build glue for the `replex` Python package.

The native module is a Rust cdylib (crates/replex-py).  Instead of pulling in
an extra build backend we override `build_ext` to invoke cargo directly and
copy the resulting shared library to wherever setuptools expects the
extension to live.  This keeps `pip install -e . --no-build-isolation`
working with nothing beyond setuptools itself.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).resolve().parent


class CargoExtension(Extension):
    def __init__(self, name: str, crate: str):
        super().__init__(name, sources=[])
        self.crate = crate


class CargoBuildExt(build_ext):
    def build_extension(self, ext):  # noqa: D102 (setuptools hook)
        if not isinstance(ext, CargoExtension):
            return super().build_extension(ext)
        subprocess.run(
            ["cargo", "build", "--release", "-p", ext.crate],
            cwd=ROOT,
            check=True,
        )
        libname = {
            "win32": "_native.dll",
            "darwin": "lib_native.dylib",
        }.get(sys.platform, "lib_native.so")
        built = ROOT / "target" / "release" / libname
        if not built.exists():
            raise FileNotFoundError(f"cargo did not produce {built}")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built, dest)


setup(
    ext_modules=[CargoExtension("replex._native", crate="replex-py")],
    cmdclass={"build_ext": CargoBuildExt},
)
