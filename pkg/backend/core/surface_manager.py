import io
import logging
import os
from datetime import datetime
from typing import Any, Optional

import pandas as pd

from backend.core.errors import SurfaceFormatError
from backend.core.surface import (
    HalfTranslationSurface, ResolvingCover, build_resolving_cover, load_surface,
)

log = logging.getLogger(__name__)

SURFACE_SUFFIX = '.surf'


class SurfaceManager:
    """Catalog of loaded surfaces plus a per-surface result cache."""

    def __init__(self, data_dir: Optional[str] = None):
        self.data_dir = data_dir
        self.surfaces: dict[str, HalfTranslationSurface] = {}
        self.documents: dict[str, str] = {}
        self.change_log: list[dict] = []
        self._covers: dict[str, ResolvingCover] = {}
        self._query_cache: dict[tuple, Any] = {}

    # ─── Loading ────────────────────────────────────────────────

    def load_text(self, document: str, source: str = '<upload>') -> HalfTranslationSurface:
        surface = load_surface(document, source)
        if surface.name in self.surfaces:
            log.info('replacing surface %s', surface.name)
        self.surfaces[surface.name] = surface
        self.documents[surface.name] = document
        self._covers.pop(surface.name, None)
        self.clear_cache(surface.name)
        self.change_log.append({
            'timestamp': datetime.now().isoformat(),
            'surface': surface.name,
            'source': source,
        })
        return surface

    def load_file(self, path: str) -> HalfTranslationSurface:
        try:
            with open(path, encoding='utf-8') as fh:
                document = fh.read()
        except OSError as e:
            raise SurfaceFormatError(f'cannot read surface file: {e.strerror}', None, path) from e
        return self.load_text(document, path)

    def load_bytes(self, file_bytes: bytes, source: str = '<upload>') -> HalfTranslationSurface:
        try:
            document = io.BytesIO(file_bytes).read().decode('utf-8')
        except UnicodeDecodeError as e:
            raise SurfaceFormatError('surface document is not UTF-8', None, source) from e
        return self.load_text(document, source)

    def load_directory(self, data_dir: Optional[str] = None) -> list[str]:
        """Load every *.surf file found in `data_dir`; bad files are logged and skipped."""
        data_dir = data_dir or self.data_dir
        if not data_dir or not os.path.isdir(data_dir):
            log.warning('surface directory %s not found', data_dir)
            return []
        loaded = []
        for entry in sorted(os.listdir(data_dir)):
            if not entry.endswith(SURFACE_SUFFIX):
                continue
            try:
                loaded.append(self.load_file(os.path.join(data_dir, entry)).name)
            except Exception as e:
                log.error('failed to load %s: %s', entry, e)
        return loaded

    def resolve(self, ref: str) -> HalfTranslationSurface:
        """A surface by catalog name, file path, or bare name inside the data directory."""
        if ref in self.surfaces:
            return self.surfaces[ref]
        if os.path.isfile(ref):
            return self.load_file(ref)
        if self.data_dir:
            candidate = os.path.join(self.data_dir, ref + SURFACE_SUFFIX)
            if os.path.isfile(candidate):
                return self.load_file(candidate)
        raise SurfaceFormatError(f'unknown surface {ref!r}', None, ref)

    def cover(self, ref: str) -> ResolvingCover:
        surface = self.resolve(ref)
        if surface.name not in self._covers:
            self._covers[surface.name] = build_resolving_cover(surface)
        return self._covers[surface.name]

    # ─── Cache ──────────────────────────────────────────────────

    def clear_cache(self, surface: Optional[str] = None):
        if surface is None:
            self._query_cache = {}
            return
        self._query_cache = {k: v for k, v in self._query_cache.items() if k[0] != surface}

    def get_cache_key(self, surface: str, method_name: str, params: Optional[dict]) -> tuple:
        if not params:
            return (surface, method_name, None)
        return (surface, method_name, tuple(sorted((k, str(v)) for k, v in params.items())))

    def cache_result(self, key, value):
        self._query_cache[key] = value
        return value

    def get_cached(self, key):
        return self._query_cache.get(key)

    # ─── Catalog ────────────────────────────────────────────────

    def summary(self, name: str) -> dict:
        s = self.resolve(name)
        cover = self.cover(name)
        return {
            'name': s.name,
            'field': s.d,
            'polygons': len(s.polygons),
            'gluings': len(s.gluings),
            'chi': s.euler_characteristic,
            'genus': s.genus,
            'translationSurface': s.is_translation_surface,
            'conePoints': [{'id': c.id, 'angle': c.angle_label, 'corners': len(c.corners)}
                           for c in s.cone_points],
            'angleSumPi': [c.k for c in s.cone_points],
            'gaussBonnet': s.gauss_bonnet(),
            'coverDegree': cover.degree,
            'coverChi': cover.cover.euler_characteristic,
            'riemannHurwitz': cover.riemann_hurwitz()['holds'],
            'transversals': sorted(s.transversals),
            'automorphisms': sorted(s.automorphisms),
        }

    def catalog(self) -> pd.DataFrame:
        rows = []
        for name in sorted(self.surfaces):
            info = self.summary(name)
            rows.append({k: info[k] for k in ('name', 'field', 'polygons', 'chi', 'genus',
                                              'translationSurface', 'coverDegree')})
            rows[-1]['singular'] = sum(1 for c in self.surfaces[name].cone_points if c.k != 2)
        return pd.DataFrame(rows)

    def export_catalog(self) -> bytes:
        return self.catalog().to_csv(index=False).encode('utf-8')
