"""Session server: live heat-flow control over a TCP socket.

Protocol: length-delimited JSON text frames.  Each frame is the decimal
byte length of the payload, a newline, then the UTF-8 JSON payload.
Requests carry a ``type`` of create | step | refine | state | set_params |
close; replies carry ``ok`` plus a monotone ``revision`` for the session,
or ``ok: false`` with a machine-readable ``code`` in {invalid_input,
not_found, instability, limit}.  All coordinates cross the wire in
Poincare disk form.  Mutating messages are serialized per session.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import uuid
import warnings

import numpy as np

from . import geometry as geo
from . import fuchsian as fg
from . import meshes as mh
from . import weights as wt
from . import maps as hm
from . import fileio
from .errors import HarmflowError, DomainError, StabilityError

PROTOCOL_VERSION = 1
MAX_DISPLAY_SEGMENTS = 20000


def send_frame(sock, obj):
    payload = json.dumps(obj, separators=(",", ":"), default=float).encode()
    sock.sendall(str(len(payload)).encode() + b"\n" + payload)


def recv_frame(sock_file):
    header = sock_file.readline()
    if not header:
        return None
    try:
        n = int(header.strip())
    except ValueError:
        raise DomainError(f"bad frame header {header!r}")
    payload = sock_file.read(n)
    if len(payload) != n:
        return None
    return json.loads(payload.decode())


class Session:
    def __init__(self, fn_domain, fn_target, level, max_level):
        if level > max_level:
            raise _Limit(f"level {level} exceeds the configured maximum "
                         f"{max_level}")
        self.lock = threading.Lock()
        self.id = uuid.uuid4().hex[:12]
        self.revision = 0
        self.group_d, self.dom_d = fileio.cached_group(fn_domain.format())
        self.group_t, _ = fileio.cached_group(fn_target.format())
        mesh = mh.build_genus2_mesh(self.group_d, self.dom_d)
        mesh = mh.rebase(mh.improve_mesh(mesh, rounds=8, smooth_iters=30))
        for _ in range(level):
            mesh = mh.midpoint_refine(mesh)
        self.mesh = mesh
        self.bw = wt.biweighted(mesh)
        self.map = hm.identity_map(self.bw,
                                   target_deck=mh.FuchsianDeck(self.group_t))
        self.dt = hm.default_step_size(self.bw)
        self.dt_auto = True
        self.tolerance = 1e-8
        self.energy_history = [hm.energy(self.map)]
        self.tension_history = [hm.tension_l2_norm(self.map)]
        self.diverged = False
        self.max_level = max_level

    def bump(self):
        self.revision += 1

    def step(self, count):
        if self.diverged:
            raise _Instability("flow diverged; lower dt with set_params "
                               "and refine from a fresh session")
        if count > 0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    state = hm.run_flow(self.map, t=self.dt,
                                        tension_tol=0.0, max_iters=count)
                except StabilityError as exc:
                    self.diverged = True
                    raise _Instability(str(exc))
            self.map = state.map
            self.energy_history.extend(state.energy_history[1:])
            self.tension_history.extend(state.tension_norm_history[1:])
        self.bump()

    def refine(self):
        if self.mesh.level + 1 > self.max_level:
            raise _Limit(f"refinement beyond level {self.max_level}")
        mesh = mh.midpoint_refine(self.mesh)
        bw = wt.biweighted(mesh)
        self.map = hm.prolong(self.map, bw)
        self.mesh, self.bw = mesh, bw
        if self.dt_auto:
            self.dt = hm.default_step_size(bw)
        self.energy_history.append(hm.energy(self.map))
        self.tension_history.append(hm.tension_l2_norm(self.map))
        self.diverged = False
        self.bump()

    def set_params(self, dt=None, tolerance=None):
        if dt is not None:
            if dt == "auto":
                self.dt = hm.default_step_size(self.bw)
                self.dt_auto = True
            else:
                dt = float(dt)
                if dt <= 0:
                    raise DomainError("dt must be positive")
                self.dt = dt
                self.dt_auto = False
        if tolerance is not None:
            self.tolerance = float(tolerance)
        self.diverged = False
        self.bump()

    def snapshot(self, full=False):
        mesh = self.mesh
        verts = geo.to_disk(mesh.vertices)
        vals = geo.to_disk(self.map.values)
        ends = mesh.edge_endpoints
        a = geo.to_disk(ends[:, 0])
        b = geo.to_disk(ends[:, 1])
        segments = np.hstack([a, b])
        ring = [segments]
        for ch in fg.GEN_LETTERS + fg.GEN_LETTERS.upper():
            g = self.group_d.matrix(ch)
            ga = geo.to_disk(geo.apply_isometry(geo.HYPERBOLIC, g, ends[:, 0]))
            gb = geo.to_disk(geo.apply_isometry(geo.HYPERBOLIC, g, ends[:, 1]))
            ring.append(np.hstack([ga, gb]))
        segments = np.vstack(ring)
        decimated = False
        if not full and len(segments) > MAX_DISPLAY_SEGMENTS:
            stride = int(np.ceil(len(segments) / MAX_DISPLAY_SEGMENTS))
            segments = segments[::stride]
            decimated = True
        axes = []
        for ch in fg.GEN_LETTERS:
            p, u, _ = geo.axis_of(self.group_d.matrix(ch))
            ts = np.linspace(-4.0, 4.0, 65)
            pts = geo.exp_map(geo.HYPERBOLIC, np.broadcast_to(p, (65, 3)),
                              ts[:, None] * u)
            axes.append(geo.to_disk(pts).tolist())
        return {
            "ok": True,
            "protocol": PROTOCOL_VERSION,
            "id": self.id,
            "revision": self.revision,
            "level": mesh.level,
            "n_vertices": mesh.n_vertices,
            "n_edges": mesh.n_edges,
            "n_triangles": mesh.n_triangles,
            "dt": self.dt,
            "tolerance": self.tolerance,
            "energy": self.energy_history[-1],
            "tension": self.tension_history[-1],
            "energy_history": self.energy_history[-2000:],
            "tension_history": self.tension_history[-2000:],
            "history_total": len(self.energy_history),
            "vertices": verts.tolist(),
            "values": vals.tolist(),
            "edges": self.mesh.edge_index.tolist(),
            "segments": segments.tolist(),
            "segments_decimated": decimated,
            "axes": axes,
            "energy_density": hm.energy_density(self.map).tolist(),
            "diverged": self.diverged,
        }


class _Limit(HarmflowError):
    code = "limit"


class _Instability(HarmflowError):
    code = "instability"


class _NotFound(HarmflowError):
    code = "not_found"


class SessionServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address=("127.0.0.1", 0), max_level=6):
        super().__init__(address, _Handler)
        self.sessions = {}
        self.sessions_lock = threading.Lock()
        self.max_level = max_level

    @property
    def address(self):
        return self.server_address

    def get_session(self, sid):
        with self.sessions_lock:
            sess = self.sessions.get(sid)
        if sess is None:
            raise _NotFound(f"unknown session {sid!r}")
        return sess

    def handle_message(self, msg):
        mtype = msg.get("type")
        if mtype == "create":
            try:
                fn_d = fg.FenchelNielsen.parse(msg["fn_domain"])
                fn_t = fg.FenchelNielsen.parse(msg["fn_target"])
                level = int(msg.get("level", 2))
                sess = Session(fn_d, fn_t, level, self.max_level)
            except _Limit:
                raise
            except (KeyError, ValueError, DomainError) as exc:
                raise DomainError(str(exc))
            with self.sessions_lock:
                self.sessions[sess.id] = sess
            with sess.lock:
                return sess.snapshot()
        if mtype is None:
            raise DomainError("message has no type")
        sid = msg.get("id")
        sess = self.get_session(sid)
        with sess.lock:
            if mtype == "step":
                sess.step(int(msg.get("count", 1)))
                return sess.snapshot(full=bool(msg.get("full", False)))
            if mtype == "refine":
                sess.refine()
                return sess.snapshot(full=bool(msg.get("full", False)))
            if mtype == "state":
                return sess.snapshot(full=bool(msg.get("full", False)))
            if mtype == "set_params":
                sess.set_params(msg.get("dt"), msg.get("tolerance"))
                return sess.snapshot()
            if mtype == "close":
                with self.sessions_lock:
                    self.sessions.pop(sid, None)
                return {"ok": True, "id": sid, "closed": True,
                        "revision": sess.revision}
        raise DomainError(f"unknown message type {mtype!r}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                msg = recv_frame(self.rfile)
            except Exception:
                break
            if msg is None:
                break
            try:
                reply = self.server.handle_message(msg)
            except (_Limit, _Instability, _NotFound) as exc:
                reply = {"ok": False, "code": exc.code, "message": str(exc)}
            except (DomainError, ValueError, KeyError) as exc:
                reply = {"ok": False, "code": "invalid_input",
                         "message": str(exc)}
            except HarmflowError as exc:
                reply = {"ok": False, "code": "invalid_input",
                         "message": str(exc)}
            try:
                send_frame(self.connection, reply)
            except Exception:
                break


class Client:
    """Blocking protocol client (used by tests and scripts)."""

    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port))
        self.rfile = self.sock.makefile("rb")

    def request(self, **msg):
        send_frame(self.sock, msg)
        reply = recv_frame(self.rfile)
        if reply is None:
            raise ConnectionError("server closed the connection")
        return reply

    def close(self):
        try:
            self.rfile.close()
            self.sock.close()
        except OSError:
            pass


def start_background_server(max_level=6):
    """In-process server on an ephemeral port; returns (server, thread)."""
    server = SessionServer(("127.0.0.1", 0), max_level=max_level)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
