from __future__ import annotations

import json
import logging
import os
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

try:
    from platformdirs import user_config_dir  # type: ignore
except Exception:
    user_config_dir = None  # optional fallback

from effectfuse.domain.errors import ConfigurationError
from effectfuse.domain.interfaces import IConfigService
from effectfuse.utils.constants import CONFIG_APP_DIR, CONFIG_FILE

logger = logging.getLogger(__name__)

_TRUTHY = {"1", "true", "yes", "y", "on"}
_FALSY = {"0", "false", "no", "n", "off"}


def _read_document(path: Path) -> dict[str, Any]:
    with path.open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not all(isinstance(v, dict) for v in doc.values()):
        raise ValueError("top level must be an object of section objects")
    return doc


class JsonConfigService(IConfigService):
    r"""
    JSON-backed layered configuration reader.

    Load order (first hit wins):
      1. Explicit path provided at construction (must exist and parse)
      2. User config dir (e.g. ~/.config/effectfuse/config.json
            or %APPDATA%\effectfuse\config.json)
      3. Project default at <repo>/config/config.json (optional)

    Optional layers that fail to parse are skipped with a warning.
    """

    DEFAULT_APP_DIR = CONFIG_APP_DIR
    DEFAULT_FILE = CONFIG_FILE

    def __init__(self, explicit_path: Path | None = None, project_root: Path | None = None):
        self._doc: dict[str, dict[str, Any]] = {}
        self._loaded_from: Path | None = None

        if explicit_path is not None:
            explicit_path = Path(explicit_path)
            try:
                self._doc = _read_document(explicit_path)
            except FileNotFoundError as e:
                raise ConfigurationError(
                    f"config file not found: {explicit_path}", details={"path": str(explicit_path)}
                ) from e
            except (OSError, ValueError) as e:
                raise ConfigurationError(
                    f"cannot read config {explicit_path}: {e}", details={"path": str(explicit_path)}
                ) from e
            self._loaded_from = explicit_path
            return

        candidates: list[Path] = []
        if user_config_dir:
            candidates.append(Path(user_config_dir(self.DEFAULT_APP_DIR)) / self.DEFAULT_FILE)
        else:
            home_env = os.environ.get("HOME")
            if home_env:
                home = Path(home_env)
            else:
                home = Path(os.environ.get("USERPROFILE", str(Path.home())))
            candidates.append(home / ".config" / self.DEFAULT_APP_DIR / self.DEFAULT_FILE)
        if project_root:
            candidates.append(project_root / "config" / self.DEFAULT_FILE)

        for path in candidates:
            try:
                if path.exists():
                    self._doc = _read_document(path)
                    self._loaded_from = path
                    break
            except (OSError, ValueError) as e:
                logger.warning("skipping malformed config %s: %s", path, e)
                continue

    # ----- IConfigService -----

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self._doc.get(section, {}).get(key, default)

    def _typed(self, section: str, key: str, default: Any, kind: str, conv: Any) -> Any:
        val = self.get(section, key, None)
        if val is None:
            return default
        try:
            return conv(val)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(
                f"[{section}].{key} must be {kind}, got {val!r}",
                details={"section": section, "key": key, "value": val},
            ) from e

    def get_int(self, section: str, key: str, default: int | None = None) -> int | None:
        def conv(v: Any) -> int:
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise ValueError(v)
            return int(v.strip()) if isinstance(v, str) else int(v)

        return self._typed(section, key, default, "an integer", conv)

    def get_float(self, section: str, key: str, default: float | None = None) -> float | None:
        def conv(v: Any) -> float:
            if isinstance(v, bool):
                raise ValueError(v)
            return float(v)

        return self._typed(section, key, default, "a number", conv)

    def get_bool(self, section: str, key: str, default: bool | None = None) -> bool | None:
        def conv(v: Any) -> bool:
            if isinstance(v, bool):
                return v
            s = str(v).strip().lower()
            if s in _TRUTHY:
                return True
            if s in _FALSY:
                return False
            raise ValueError(v)

        return self._typed(section, key, default, "a boolean", conv)

    def get_list(
        self, section: str, key: str, default: Sequence[Any] | None = None
    ) -> list[Any] | None:
        def conv(v: Any) -> list[Any]:
            if isinstance(v, str):
                return [s.strip() for s in v.split(",") if s.strip()]
            if isinstance(v, (list, tuple)):
                return list(v)
            raise ValueError(v)

        out = self._typed(section, key, None, "a list", conv)
        return out if out is not None else (list(default) if default is not None else None)

    def as_dict(self) -> Mapping[str, Mapping[str, Any]]:
        return json.loads(json.dumps(self._doc))

    # ----- Extras -----

    @property
    def loaded_from(self) -> Path | None:
        """For diagnostics and the reproducibility header."""
        return self._loaded_from

    @property
    def base_dir(self) -> Path:
        """Directory relative paths in the document resolve against."""
        return self._loaded_from.parent if self._loaded_from else Path.cwd()

    def resolve_path(self, value: str | Path) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (self.base_dir / p)
