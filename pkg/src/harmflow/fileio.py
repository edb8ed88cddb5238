"""Text file formats: meshes, weights, maps, study configs.

All floats are written with 17 significant digits (round-trip exact for
64-bit floats).  Hyperbolic points are serialized in Poincare disk
coordinates (x, y, z) -> (x, y) / (1 + z); Euclidean points as (x, y).
Deck words are strings: "m,n" for torus lattices, generator letters with
"." for the identity on genus-2 surfaces.
"""

from __future__ import annotations

import configparser
import io
import os
import tempfile

import numpy as np

from . import geometry as geo
from . import fuchsian as fg
from . import meshes as mh
from .errors import ValidationError, DomainError

F = "{:.17g}".format

_GROUP_CACHE = {}


def cached_group(fn_text):
    """Deterministic genus-2 group for a serialized Fenchel-Nielsen string."""
    hit = _GROUP_CACHE.get(fn_text)
    if hit is None:
        hit = fg.build_group(fg.FenchelNielsen.parse(fn_text))
        _GROUP_CACHE[fn_text] = hit
    return hit


def coords_out(ctx, points):
    if ctx.hyperbolic:
        return geo.to_disk(points)
    return geo.to_plane(points)


def coords_in(ctx, xy):
    if ctx.hyperbolic:
        return geo.from_disk(xy)
    return geo.from_plane(xy)


def snap_to_serialization(mesh):
    """Replace vertex coordinates by their serialization round trip.

    The exact serialized coordinates are cached on the mesh (the disk/plane
    projection is not bitwise idempotent), so write -> read reproduces the
    mesh bit-exactly and derived statistics agree exactly.
    """
    xy = np.array([[float(F(x)), float(F(y))]
                   for x, y in coords_out(mesh.geometry, mesh.vertices)])
    snapped = mesh.with_vertices(coords_in(mesh.geometry, xy))
    snapped.serialized_xy = xy
    return snapped


def _surface_line(surface):
    if surface is None:
        return "surface none"
    if surface["kind"] == "torus":
        u, v = surface["u"], surface["v"]
        return (f"surface torus {F(u[0])},{F(u[1])},{F(v[0])},{F(v[1])} "
                f"grid {surface['grid']}")
    if surface["kind"] == "genus2":
        return f"surface genus2 fn {surface['fn']}"
    raise DomainError(f"unknown surface kind {surface['kind']!r}")


def write_mesh(mesh, path=None, vertex_weights=None, edge_weights=None,
               map_section=None):
    """Serialize a mesh (optionally with weights and a map) to text."""
    out = io.StringIO()
    w = out.write
    w("harmflow-mesh v1\n")
    w(f"geometry {mesh.geometry.kind}\n")
    w(f"level {mesh.level}\n")
    w(_surface_line(mesh.surface) + "\n")
    xy = getattr(mesh, "serialized_xy", None)
    if xy is None:
        xy = coords_out(mesh.geometry, mesh.vertices)
    w(f"vertices {mesh.n_vertices}\n")
    for (x, y), c in zip(xy, mesh.vertex_class):
        w(f"{F(x)} {F(y)} {int(c)}\n")
    w(f"triangles {mesh.n_triangles}\n")
    ws = mesh.deck.word_str
    for tri, words in zip(mesh.triangles, mesh.corner_words):
        w(f"{tri[0]} {tri[1]} {tri[2]} {ws(words[0])} {ws(words[1])} {ws(words[2])}\n")
    w(f"edgeflags {mesh.n_edges}\n")
    w(" ".join(str(int(b)) for b in mesh.edge_on_base) + "\n")
    if vertex_weights is not None:
        w(f"vertex_weights {len(vertex_weights)}\n")
        for val in vertex_weights:
            w(F(val) + "\n")
    if edge_weights is not None:
        w(f"edge_weights {len(edge_weights)}\n")
        for (i, j), word, val in zip(mesh.edge_index, mesh.edge_words,
                                     edge_weights):
            w(f"{i} {j} {ws(word)} {F(val)}\n")
    if map_section is not None:
        f = map_section
        w("map\n")
        w(f"target_geometry {f.target_geometry.kind}\n")
        tsurf = getattr(f.rho, "surface_text", None)
        if tsurf is None:
            tsurf = _target_surface_text(f)
        w(tsurf + "\n")
        mxy = coords_out(f.target_geometry, f.values)
        w(f"values {len(mxy)}\n")
        for x, y in mxy:
            w(f"{F(x)} {F(y)}\n")
    text = out.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text


def _target_surface_text(f):
    rho = f.rho
    if rho is None:
        return "target_surface none"
    if isinstance(rho, mh.TorusDeck):
        return (f"target_surface torus {F(rho.u[0])},{F(rho.u[1])},"
                f"{F(rho.v[0])},{F(rho.v[1])}")
    if isinstance(rho, mh.FuchsianDeck):
        return f"target_surface genus2 fn {rho.group.fn.format()}"
    raise DomainError("cannot serialize this target representation")


def atomic_write(path, text):
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".harmflow-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, text, path="<string>"):
        self.lines = text.splitlines()
        self.pos = 0
        self.path = path

    def next(self, what):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line and not line.startswith("#"):
                return line
        raise ValidationError(f"{self.path}: unexpected end of file, expected {what}",
                              [f"line {self.pos}: missing {what}"])

    def peek(self):
        pos = self.pos
        while pos < len(self.lines):
            line = self.lines[pos].strip()
            if line and not line.startswith("#"):
                return line
            pos += 1
        return None


def _parse_surface(line, geometry):
    parts = line.split()
    if parts[1] == "none":
        return None, None
    if parts[1] == "torus":
        nums = [float(x) for x in parts[2].split(",")]
        grid = int(parts[4]) if len(parts) > 4 else 0
        deck = mh.TorusDeck(nums[0:2], nums[2:4])
        return {"kind": "torus", "u": tuple(deck.u), "v": tuple(deck.v),
                "grid": grid}, deck
    if parts[1] == "genus2":
        fn_text = parts[3]
        group, _ = cached_group(fn_text)
        return {"kind": "genus2", "fn": fn_text}, mh.FuchsianDeck(group)
    raise ValidationError(f"unknown surface spec {line!r}")


def read_mesh(path_or_text, with_sections=False):
    """Parse a mesh file; returns the mesh, or (mesh, sections) dict."""
    if os.path.exists(str(path_or_text)):
        with open(path_or_text) as fh:
            text = fh.read()
        path = str(path_or_text)
    else:
        text, path = path_or_text, "<string>"
    violations = []
    rd = _Reader(text, path)
    if rd.next("header") != "harmflow-mesh v1":
        raise ValidationError(f"{path}: not a harmflow mesh file")
    kind = rd.next("geometry").split()[1]
    ctx = geo.context(kind)
    level = int(rd.next("level").split()[1])
    surface, deck = _parse_surface(rd.next("surface"), ctx)
    n_v = int(rd.next("vertices").split()[1])
    xy = np.empty((n_v, 2))
    vclass = np.empty(n_v, dtype=np.int8)
    for i in range(n_v):
        parts = rd.next("vertex row").split()
        xy[i] = [float(parts[0]), float(parts[1])]
        vclass[i] = int(parts[2])
    verts = coords_in(ctx, xy)
    n_t = int(rd.next("triangles").split()[1])
    tris = np.empty((n_t, 3), dtype=np.int64)
    words = []
    for i in range(n_t):
        parts = rd.next("triangle row").split()
        tri = [int(parts[k]) for k in range(3)]
        for v in tri:
            if not 0 <= v < n_v:
                violations.append(f"triangle {i} references missing vertex {v}")
        tris[i] = tri
        if deck is None:
            words.append((None, None, None))
        else:
            words.append(tuple(deck.parse_word(parts[3 + k]) for k in range(3)))
        if len(violations) >= 10:
            raise ValidationError(f"{path}: invalid mesh", violations)
    n_e = int(rd.next("edgeflags").split()[1])
    flags = np.array([bool(int(x)) for x in rd.next("edge flag row").split()])
    if len(flags) != n_e:
        violations.append("edgeflags count mismatch")
    if violations:
        raise ValidationError(f"{path}: invalid mesh", violations)
    mesh = mh.Triangulation(ctx, deck, verts, tris, words, level=level,
                            vertex_class=vclass, edge_on_base=flags,
                            surface=surface)
    mesh.serialized_xy = xy
    if mesh.n_edges != n_e:
        raise ValidationError(f"{path}: edge count mismatch",
                              [f"declared {n_e}, derived {mesh.n_edges}"])
    if not with_sections:
        return mesh
    sections = {}
    while True:
        head = rd.peek()
        if head is None:
            break
        tag = head.split()[0]
        if tag == "vertex_weights":
            n = int(rd.next("vertex_weights").split()[1])
            sections["vertex_weights"] = np.array(
                [float(rd.next("weight")) for _ in range(n)])
        elif tag == "edge_weights":
            n = int(rd.next("edge_weights").split()[1])
            vals = np.full(mesh.n_edges, np.nan)
            seen = {}
            for _ in range(n):
                parts = rd.next("edge weight row").split()
                i, j, word, val = int(parts[0]), int(parts[1]), parts[2], float(parts[3])
                key = (min(i, j), max(i, j), word)
                if key in seen and seen[key] != val:
                    raise ValidationError(
                        f"{path}: non-symmetric edge weight section",
                        [f"non-symmetric: edge {i}-{j} listed twice with different values"])
                seen[key] = val
            # match to derived canonical edges by (i, j, word)
            for e, ((a, b), w) in enumerate(zip(mesh.edge_index, mesh.edge_words)):
                key = (min(int(a), int(b)), max(int(a), int(b)), mesh.deck.word_str(w))
                alt = (int(a), int(b), mesh.deck.word_str(w))
                if key in seen:
                    vals[e] = seen[key]
                elif alt in seen:
                    vals[e] = seen[alt]
            if np.any(np.isnan(vals)):
                missing = int(np.flatnonzero(np.isnan(vals))[0])
                raise ValidationError(
                    f"{path}: edge weight section incomplete",
                    [f"no weight for derived edge {missing}"])
            sections["edge_weights"] = vals
        elif tag == "map":
            rd.next("map")
            tkind = rd.next("target_geometry").split()[1]
            tctx = geo.context(tkind)
            tline = rd.next("target_surface")
            _, tdeck = _parse_surface(tline.replace("target_surface", "surface"),
                                      tctx)
            n = int(rd.next("values").split()[1])
            mxy = np.array([[float(x) for x in rd.next("value row").split()]
                            for _ in range(n)])
            sections["map"] = {"target_geometry": tctx, "rho": tdeck,
                               "values": coords_in(tctx, mxy)}
        else:
            raise ValidationError(f"{path}: unknown section {tag!r}")
    return mesh, sections


def validate_files(paths):
    """Schema validation with per-file violation lists."""
    report = {}
    for p in paths:
        try:
            read_mesh(p, with_sections=True)
            report[str(p)] = []
        except ValidationError as exc:
            report[str(p)] = exc.violations or [str(exc)]
        except Exception as exc:  # malformed beyond schema
            report[str(p)] = [f"unreadable: {exc}"]
    return report


def read_study_config(path):
    """Study configuration from an INI-style file (section [study])."""
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    if "study" not in cp:
        raise ValidationError(f"{path}: missing [study] section")
    return dict(cp["study"])
