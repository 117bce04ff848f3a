"""On-disk formats: raster series, power series, fleet, checkpoint, config.

Binary payloads are little-endian float32 behind a text header; every file
type starts with a distinct 6-byte signature so a misrouted file fails on
its first read.
"""
import os
import tempfile

import numpy as np

from .config import Config, parse_config_text
from .errors import FormatError
from .series import Fleet, GridSpec, PowerSeries, RasterSeries, iso, to_datetime64

RASTER_MAGIC = b"PVRS1\n"
CHECKPOINT_MAGIC = b"PVNW1\n"
SERIES_HEADER = "timestamp,power_mw"
FLEET_HEADER = "lat,lon,capacity_mw"

_F32 = np.dtype("<f4")


def atomic_write(path, data):
    """Write bytes to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _split_header(blob, magic, n_lines, path, kind):
    if blob[:len(magic)] != magic:
        raise FormatError(f"{path}: bad magic {blob[:len(magic)]!r}, expected {magic!r} ({kind})")
    pos = len(magic)
    lines = []
    for _ in range(n_lines):
        end = blob.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: truncated header after {len(lines)} lines")
        lines.append(blob[pos:end].decode("ascii"))
        pos = end + 1
    return lines, pos


# --------------------------------------------------------------------------
# Raster series

_RASTER_FIELDS = ("n_frames", "n_channels", "n_rows", "n_cols", "t0", "dt_seconds",
                  "lat0", "lon0", "dlat", "dlon", "channels")


def raster_to_bytes(series):
    g = series.grid
    n, c, r, k = series.frames.shape
    header = [str(n), str(c), str(r), str(k), iso(series.t0), str(int(series.dt)),
              repr(float(g.lat0)), repr(float(g.lon0)), repr(float(g.dlat)), repr(float(g.dlon)),
              ",".join(series.channels)]
    text = "".join(line + "\n" for line in header).encode("ascii")
    return RASTER_MAGIC + text + np.ascontiguousarray(series.frames, dtype=_F32).tobytes()


def write_raster(path, series):
    atomic_write(path, raster_to_bytes(series))


def read_raster(path):
    blob = _read_bytes(path)
    lines, pos = _split_header(blob, RASTER_MAGIC, len(_RASTER_FIELDS), path, "raster")
    values = dict(zip(_RASTER_FIELDS, lines))
    try:
        dims = [int(values[k]) for k in ("n_frames", "n_channels", "n_rows", "n_cols")]
        dt = int(values["dt_seconds"])
        geo = [float(values[k]) for k in ("lat0", "lon0", "dlat", "dlon")]
    except ValueError as exc:
        raise FormatError(f"{path}: bad numeric header field ({exc})") from None
    for name, v in zip(("n_frames", "n_channels", "n_rows", "n_cols"), dims):
        if v < 1:
            raise FormatError(f"{path}: header field {name} must be >= 1, got {v}")
    channels = tuple(values["channels"].split(","))
    if len(channels) != dims[1]:
        raise FormatError(f"{path}: header field channels lists {len(channels)} names for n_channels={dims[1]}")
    expected = int(np.prod(dims)) * 4
    actual = len(blob) - pos
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch: expected {expected} bytes from "
            f"n_frames*n_channels*n_rows*n_cols*4, got {actual}")
    try:
        t0 = to_datetime64(values["t0"])
    except ValueError:
        raise FormatError(f"{path}: header field t0 is not ISO-8601: {values['t0']!r}") from None
    frames = np.frombuffer(blob, dtype=_F32, offset=pos).reshape(dims).astype(np.float64)
    grid = GridSpec.unchecked(geo[0], geo[1], geo[2], geo[3], dims[2], dims[3])
    return RasterSeries(grid=grid, channels=channels, t0=t0, dt=dt, frames=frames)


# --------------------------------------------------------------------------
# Power series

def series_to_text(series):
    times = series.times
    rows = [SERIES_HEADER]
    rows.extend(f"{iso(t)},{v:.9g}" for t, v in zip(times, series.values))
    return "\n".join(rows) + "\n"


def write_series(path, series):
    atomic_write(path, series_to_text(series).encode("ascii"))


def read_series(path, default_dt=10800):
    text = _read_bytes(path).decode("ascii", errors="replace")
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file (expected header {SERIES_HEADER!r})")
    if lines[0].strip() != SERIES_HEADER:
        raise FormatError(f"{path}:1: bad header {lines[0][:40]!r}, expected {SERIES_HEADER!r}")
    times, values = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'timestamp,power_mw', got {line!r}")
        try:
            t = to_datetime64(parts[0])
            v = float(parts[1])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: unparsable line {line!r}") from None
        if times and t <= times[-1]:
            raise FormatError(f"{path}:{lineno}: timestamp {parts[0]} is not after the previous one")
        times.append(t)
        values.append(v)
    if not times:
        raise FormatError(f"{path}: no data rows")
    if len(times) == 1:
        dt = int(default_dt)
    else:
        steps = np.diff(np.array(times, dtype="datetime64[s]")).astype(np.int64)
        dt = int(steps[0])
        bad = np.nonzero(steps != dt)[0]
        if bad.size:
            raise FormatError(f"{path}:{int(bad[0]) + 3}: irregular time step ({int(steps[bad[0]])} s, expected {dt} s)")
    return PowerSeries(t0=times[0], dt=dt, values=np.array(values))


# --------------------------------------------------------------------------
# Fleet

def write_fleet(path, fleet):
    g = fleet.grid
    rows = [FLEET_HEADER, f"# grid {g.lat0!r} {g.lon0!r} {g.dlat!r} {g.dlon!r} {g.n_rows} {g.n_cols}"]
    rows.extend(f"{la!r},{lo!r},{c!r}" for la, lo, c in fleet.plants)
    atomic_write(path, ("\n".join(rows) + "\n").encode("ascii"))


def read_fleet(path):
    text = _read_bytes(path).decode("ascii", errors="replace")
    lines = text.splitlines()
    if not lines or lines[0].strip() != FLEET_HEADER:
        raise FormatError(f"{path}:1: bad header, expected {FLEET_HEADER!r}")
    grid = GridSpec()
    lats, lons, caps = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("# grid "):
            try:
                p = line.split()[2:]
                grid = GridSpec(float(p[0]), float(p[1]), float(p[2]), float(p[3]), int(p[4]), int(p[5]))
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{lineno}: bad grid line {line!r}") from None
            continue
        if not line.strip():
            continue
        try:
            la, lo, c = (float(s) for s in line.split(","))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: unparsable line {line!r}") from None
        lats.append(la)
        lons.append(lo)
        caps.append(c)
    if not caps:
        raise FormatError(f"{path}: no plants")
    return Fleet(lats=lats, lons=lons, capacities=caps, grid=grid)


# --------------------------------------------------------------------------
# Checkpoint

def write_checkpoint(path, params, config, extra=None):
    """Save parameters as float32 behind a text header echoing ``config``.

    ``extra`` is an optional dict of additional ``key = value`` provenance
    lines (e.g. grid shape, channel names, normalization statistics).
    """
    cfg_lines = config.to_text().splitlines()
    extra_lines = [f"{k} = {v}" for k, v in (extra or {}).items()]
    entries = [f"{name} {','.join(str(s) for s in p.shape)}" for name, p in params.items()]
    head = [f"config {len(cfg_lines)}", *cfg_lines,
            f"extra {len(extra_lines)}", *extra_lines,
            f"entries {len(entries)}", *entries]
    payload = b"".join(np.ascontiguousarray(p, dtype=_F32).tobytes() for p in params.values())
    atomic_write(path, CHECKPOINT_MAGIC + ("\n".join(head) + "\n").encode("ascii") + payload)


def _count_line(line, label, path):
    parts = line.split()
    if len(parts) != 2 or parts[0] != label or not parts[1].isdigit():
        raise FormatError(f"{path}: expected '{label} <count>' header line, got {line!r}")
    return int(parts[1])


def read_checkpoint(path):
    """Return ``(params, config, extra)``; parameters come back as float64."""
    blob = _read_bytes(path)
    if blob[:6] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:6]!r}, expected {CHECKPOINT_MAGIC!r} (checkpoint)")
    pos = 6

    def next_line():
        nonlocal pos
        end = blob.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: truncated header")
        line = blob[pos:end].decode("ascii")
        pos = end + 1
        return line

    n_cfg = _count_line(next_line(), "config", path)
    config = parse_config_text("\n".join(next_line() for _ in range(n_cfg)), source=f"{path}:config")
    n_extra = _count_line(next_line(), "extra", path)
    extra = {}
    for _ in range(n_extra):
        k, _, v = next_line().partition(" = ")
        extra[k] = v
    n_entries = _count_line(next_line(), "entries", path)
    shapes = []
    for _ in range(n_entries):
        name, _, dims = next_line().partition(" ")
        try:
            shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        except ValueError:
            raise FormatError(f"{path}: bad shape for entry {name!r}: {dims!r}") from None
        shapes.append((name, shape))
    expected = sum(int(np.prod(s)) for _, s in shapes) * 4
    if len(blob) - pos != expected:
        raise FormatError(f"{path}: payload length mismatch: expected {expected} bytes from entries, got {len(blob) - pos}")
    params = {}
    for name, shape in shapes:
        n = int(np.prod(shape))
        params[name] = np.frombuffer(blob, dtype=_F32, count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 4 * n
    return params, config, extra


def parse_config(path):
    """Read a ``key = value`` config file into a validated :class:`Config`."""
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=os.fspath(path))


__all__ = [
    "Config", "atomic_write", "parse_config", "read_checkpoint", "read_fleet", "read_raster",
    "read_series", "write_checkpoint", "write_fleet", "write_raster", "write_series",
]
