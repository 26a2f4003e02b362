"""Acceptance suite: one test per release criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s`. Tolerances are pinned in
the assertions; the throughput gates print their measured rates.
"""

import math
import time

import numpy as np

import eventforge.stream_format as sf
from eventforge.bench import bench_lnes, bench_loader, bench_simulator
from eventforge.calibration import CalibrationInput, estimate_threshold
from eventforge.events import EVENT_DTYPE, SensorGeometry, events_from_columns
from eventforge.filtering import (
    Action,
    Mode,
    PoseFilter,
    Scheduler,
    mode_for_residual,
    predict,
    schedule,
    settings_for_mode,
    update,
    white_noise_cov,
    initial_state,
)
from eventforge.metrics import PckCurve, auc, default_thresholds, pck3d
from eventforge.representations import build_eci, build_eci_s, build_eoi, build_lnes
from eventforge.simulator import (
    CameraConfig,
    LogBrightnessFrame,
    MemoryFrame,
    run_simulation,
    sample_noise_pixels,
    sample_scene,
    step,
)
from eventforge.stream_format import decode_events, encode_events, encode_metadata


def report(name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"PASS {name}{suffix}")


# ---------------------------------------------------------------------------
# criterion 1: simulator oracle equivalence


def scalar_oracle_step(memory, frame, config, rng):
    """Scalar per-pixel reimplementation of the emission rules (independent
    of the vectorized path; noise pixels use the same documented sampler)."""
    h, w = memory.shape
    m = memory.copy()
    events = []
    for channel, rate in ((0, config.noise_rate_positive), (1, config.noise_rate_negative)):
        idx = sample_noise_pixels(rng, h * w, config.noise_probability(rate))
        for lin in idx:
            events.append((frame.timestamp, lin % w, lin // w, channel))
    for y in range(h):
        for x in range(w):
            delta = frame.values[y, x] - m[y, x]
            if delta >= config.threshold:
                k = math.floor(delta / config.threshold)
                events.extend((frame.timestamp, x, y, 0) for _ in range(k))
                m[y, x] = m[y, x] + k * config.threshold
            elif delta <= -config.threshold:
                k = math.floor(-delta / config.threshold)
                events.extend((frame.timestamp, x, y, 1) for _ in range(k))
                m[y, x] = m[y, x] - k * config.threshold
    arr = np.array(events, dtype=EVENT_DTYPE) if events else np.empty(0, EVENT_DTYPE)
    return arr, m


def test_simulator_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = 0
    for case in range(50):
        w, h = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        with_noise = case % 2 == 1
        config = CameraConfig(
            SensorGeometry(w, h),
            threshold=float(rng.uniform(0.1, 1.2)),
            noise_rate_positive=float(rng.uniform(0, 2)) * w * h * (1 if with_noise else 0),
            noise_rate_negative=float(rng.uniform(0, 2)) * w * h * (1 if with_noise else 0),
        )
        n_frames = int(rng.integers(1, 101))
        m0 = rng.normal(0, 1, (h, w))
        mem_fast = MemoryFrame(m0.copy())
        mem_ref = m0.copy()
        seed = int(rng.integers(1 << 30))
        rng_fast = np.random.default_rng(seed)
        rng_ref = np.random.default_rng(seed)
        level = m0
        for i in range(n_frames):
            level = level + rng.normal(0, 0.6, (h, w))
            frame = LogBrightnessFrame(level, timestamp=i * 1000)
            ev_fast, mem_fast = step(mem_fast, frame, config, rng_fast)
            ev_ref, mem_ref = scalar_oracle_step(mem_ref, frame, config, rng_ref)
            assert np.array_equal(ev_fast, ev_ref)
            assert np.array_equal(mem_fast.values, mem_ref)
        cases += 1
    elapsed = time.perf_counter() - start
    assert cases == 50
    assert elapsed < 10.0
    report("simulator oracle equivalence", f"50 cases, exact, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: memory-frame invariant


def test_memory_frame_invariant():
    start = time.perf_counter()
    geometry = SensorGeometry(240, 180)
    config = CameraConfig(geometry, threshold=0.5, noise_rate_positive=0.0,
                          noise_rate_negative=0.0)
    rng = np.random.default_rng(11)
    scene = sample_scene(rng, geometry, trajectory_seconds=11, rerandomize_period=None)
    steps = 0
    worst = 0.0
    for s in run_simulation(scene, config, 10.0, rng):
        residual = float(np.abs(s.log_values - s.memory).max())
        worst = max(worst, residual)
        assert residual < config.threshold
        steps += 1
    elapsed = time.perf_counter() - start
    assert steps == 10_000
    assert elapsed < 30.0
    report("memory-frame invariant",
           f"10^4 steps, max residual {worst:.12f} < 0.5, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: format round-trip + decoder fuzz


def test_format_round_trip_and_fuzz():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    checked = 0
    for case in range(1000):
        if case == 0:
            n_ev, n_steps = 0, 0
        elif case == 1:
            n_ev, n_steps = 0, 3
        elif case == 2:
            n_ev, n_steps = 1, 1
        else:
            n_steps = int(rng.integers(1, 40))
            n_ev = int(rng.integers(0, 300))
        t = np.sort(rng.integers(0, max(n_steps, 1), n_ev)) * 1000
        stream = events_from_columns(
            t.astype(np.int64),
            rng.integers(0, 65536, n_ev).astype(np.uint16),
            rng.integers(0, 256, n_ev).astype(np.uint16),
            rng.integers(0, 2, n_ev).astype(np.uint8),
        )
        data, _ = encode_events(stream, step_count=n_steps)
        assert len(data) == 4 * (n_ev + n_steps)
        decoded, steps = decode_events(data)
        assert steps == n_steps
        assert np.array_equal(decoded, stream)
        assert encode_events(decoded, step_count=steps).data == data
        checked += 1
    assert checked == 1000

    crashes = 0
    valid_p = np.array([0, 1, 255], dtype=np.uint8)
    sizes = rng.integers(0, 64, 1_000_000)
    biased = rng.random(1_000_000) < 0.3
    for i in range(1_000_000):
        blob = rng.integers(0, 256, int(sizes[i]), dtype=np.uint8)
        if biased[i] and len(blob) >= 4:
            blob[3::4] = valid_p[rng.integers(0, 3, len(blob[3::4]))]
        try:
            decode_events(blob.tobytes())
        except sf.StreamFormatError:
            pass
        except Exception:
            crashes += 1
    elapsed = time.perf_counter() - start
    assert crashes == 0
    assert elapsed < 60.0
    report("format round-trip + fuzz", f"1000 round-trips bit-exact, 10^6 fuzz inputs, "
           f"0 crashes, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 4: metadata record size


def test_metadata_record_size():
    for frames in (1, 7, 100):
        data = encode_metadata(np.zeros((frames, 12)))
        assert len(data) - 4 == frames * 98
    report("metadata record size", "N=12 records are exactly 98 bytes")


# ---------------------------------------------------------------------------
# criterion 5: LNES correctness + baseline identities


def lnes_replay_oracle(window, geometry):
    """Independent last-event-wins replay over a dict of cells."""
    cells = {}
    for e in window.events:
        cells[(int(e["p"]), int(e["y"]), int(e["x"]))] = (
            (int(e["t"]) - window.start) / window.length
        )
    img = np.zeros((2, geometry.height, geometry.width))
    for (c, y, x), value in cells.items():
        img[c, y, x] = value
    return img


def test_lnes_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    geometry = SensorGeometry(16, 12)
    from eventforge.events import EventWindow

    for _ in range(1000):
        n = int(rng.integers(0, 150))
        w_start = int(rng.integers(0, 5000))
        w_len = int(rng.integers(1, 8000))
        t = np.sort(rng.integers(w_start, w_start + w_len, n))
        window = EventWindow(w_start, w_len, events_from_columns(
            t.astype(np.int64),
            rng.integers(0, geometry.width, n).astype(np.uint16),
            rng.integers(0, geometry.height, n).astype(np.uint16),
            rng.integers(0, 2, n).astype(np.uint8),
        ))
        lnes = build_lnes(window, geometry).channels
        assert np.array_equal(lnes, lnes_replay_oracle(window, geometry))
        assert lnes.min() >= 0.0 and lnes.max() < 1.0
        eoi = build_eoi(window, geometry).channels
        eci = build_eci(window, geometry).channels
        eci_s = build_eci_s(window, geometry).channels
        assert np.array_equal(eoi, (eci > 0).astype(float))
        assert np.array_equal(eci_s[0], eci.sum(axis=0))
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report("LNES correctness", f"1000 windows vs replay oracle, values in [0,1), "
           f"EOI/ECI/ECI-S identities, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 6: calibration round-trip


def test_calibration_round_trip():
    start = time.perf_counter()
    rng = np.random.default_rng(13)
    height = width = 16
    growth = rng.uniform(0.10, 0.14, (height, width))
    base = rng.uniform(15.0, 30.0, (height, width))
    j = np.arange(220)[:, None, None]
    frames = base * np.exp(growth * j)  # monotone per pixel, ~22-31 log units total
    timestamps = np.arange(len(frames), dtype=np.int64) * 1000
    results = {}
    for c_true in (0.2, 0.5, 1.0):
        config = CameraConfig(SensorGeometry(width, height), threshold=c_true,
                              noise_rate_positive=0.0, noise_rate_negative=0.0)
        memory = MemoryFrame(np.log(np.maximum(frames[0], 10.0)))
        chunks = []
        for k in range(1, len(frames)):
            frame = LogBrightnessFrame(np.log(np.maximum(frames[k], 10.0)), timestamp=k * 1000)
            events, memory = step(memory, frame, config, rng)
            if len(events):
                chunks.append(events)
        events = np.concatenate(chunks)
        est = estimate_threshold(CalibrationInput(frames, timestamps, events, epsilon=10.0))
        rel = abs(est.value - c_true) / c_true
        assert rel <= 0.05
        results[c_true] = rel
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    detail = ", ".join(f"C={c}: {r * 100:.2f}%" for c, r in results.items())
    report("calibration round-trip", f"{detail}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 7: Kalman properties


def test_kalman_properties():
    start = time.perf_counter()
    q = white_noise_cov(0.1, 1.0)
    block = np.array([[0.025, 0.05], [0.05, 0.1]])
    for i in range(12):
        assert np.array_equal(q[2 * i : 2 * i + 2, 2 * i : 2 * i + 2], block)

    rng = np.random.default_rng(77)
    state = initial_state(rng.normal(size=12))
    settings = settings_for_mode(Mode.SLOW)
    fast = settings_for_mode(Mode.FAST)
    for i in range(100_000):
        s = settings if i % 2 else fast
        state = predict(state, s)
        state, _ = update(state, rng.normal(0, 1, 12), s)
        p = state.covariance
        assert np.abs(p - p.T).max() <= 1e-9
        assert np.linalg.eigvalsh(p).min() >= -1e-9

    velocity = rng.uniform(-0.02, 0.02, 12)
    truth = rng.uniform(-1, 1, 12) + np.arange(800)[:, None] * velocity
    noisy = truth + rng.normal(0, 0.3, truth.shape)
    filt = PoseFilter(settings_for_mode(Mode.SLOW))
    outputs = np.stack([filt.step(obs)[0] for obs in noisy])
    rmse_filtered = float(np.sqrt(((outputs[100:] - truth[100:]) ** 2).mean()))
    rmse_raw = float(np.sqrt(((noisy[100:] - truth[100:]) ** 2).mean()))
    assert rmse_filtered < rmse_raw
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report("Kalman properties", f"white-noise blocks exact, PSD over 10^5 cycles, "
           f"RMSE {rmse_filtered:.3f} < {rmse_raw:.3f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 8: scheduler thresholds


def make_lnes(values_at=None, width=40, height=30, length=100_000):
    from eventforge.events import EventWindow

    values_at = values_at or {}
    ts = [int(v * length) for v in values_at.values()]
    order = np.argsort(ts)
    keys = list(values_at.keys())
    ev = events_from_columns(
        np.asarray(ts, np.int64)[order] if ts else np.empty(0, np.int64),
        np.asarray([k[0] for k in keys], np.uint16)[order] if ts else np.empty(0, np.uint16),
        np.asarray([k[1] for k in keys], np.uint16)[order] if ts else np.empty(0, np.uint16),
        np.asarray([k[2] for k in keys], np.uint8)[order] if ts else np.empty(0, np.uint8),
    )
    return build_lnes(EventWindow(0, length, ev), SensorGeometry(width, height))


def test_scheduler_thresholds():
    sched = Scheduler()
    assert schedule(sched, 9, make_lnes({(0, 0, 0): 0.5})) is Action.DEFER
    sched = Scheduler()
    assert schedule(sched, 10, make_lnes({(0, 0, 0): 0.5})) is Action.EMIT_NEW_PREDICTION

    sched = Scheduler()
    quiet = make_lnes()
    actions = [schedule(sched, 10, quiet) for _ in range(16)]
    assert actions[15] is Action.REPEAT_LAST
    assert all(a is Action.EMIT_NEW_PREDICTION for a in actions[:15])

    assert mode_for_residual(0.699) is Mode.SLOW
    assert mode_for_residual(0.700) is Mode.FAST
    sched = Scheduler()
    main = PoseFilter(settings_for_mode(Mode.SLOW))
    sched.observe(np.zeros(12))
    obs = np.zeros(12)
    obs[0] = 0.71
    sched.observe(obs)
    busy = make_lnes({(x, y, 0): 0.9 for x in range(20) for y in range(20)})
    schedule(sched, 50, busy, main)
    assert main.settings.process_sigma2 == 3.0 and main.settings.observation_noise == 1.0
    report("scheduler thresholds", "defer at 9 / proceed at 10, repeat-last below 300, "
           "mode flips exactly at 0.7")


# ---------------------------------------------------------------------------
# criterion 9: metrics


def test_metrics_properties():
    rng = np.random.default_rng(8)
    gt = rng.integers(-80, 80, (6, 21, 3)).astype(float)
    pred = gt + rng.integers(-30, 30, gt.shape)
    base = pck3d(pred, gt)
    shifted = pck3d(pred + np.array([250.0, -90.0, 40.0]), gt)
    assert np.array_equal(base.fractions, shifted.fractions)

    t = default_thresholds(100.0)
    ramp_auc = auc(PckCurve(t, t / 100.0))
    assert abs(ramp_auc - 0.5) <= 1e-9

    for _ in range(20):
        g = rng.uniform(-50, 50, (4, 21, 3))
        p = g + rng.normal(0, 25, g.shape)
        curve = pck3d(p, g)
        assert (np.diff(curve.fractions) >= 0).all()
    report("metrics", f"translation-invariant 3D-PCK, ramp AUC {ramp_auc:.10f}, "
           "curves non-decreasing")


# ---------------------------------------------------------------------------
# criterion 10: throughput gates


def test_throughput_loader(tmp_path):
    rate, count = bench_loader(str(tmp_path), n_events=4_000_000, n_steps=4_000)
    print(f"  loader: {rate:.3e} events/s (gate 5e7, reference 1.75e8)")
    assert rate >= 5e7
    report("throughput: loader", f"{rate:.3e} events/s >= 5e7")


def test_throughput_simulator():
    fps, frames = bench_simulator(seconds=1.0, seed=0)
    print(f"  simulator: {fps:.0f} frames/s at 240x180 (gate 2000)")
    assert fps >= 2000
    report("throughput: simulator", f"{fps:.0f} frames/s >= 2000")


def test_throughput_lnes_builder():
    rate, built = bench_lnes(n_windows=1500)
    print(f"  lnes builder: {rate:.0f} windows/s (gate 1000)")
    assert rate >= 1000
    report("throughput: LNES builder", f"{rate:.0f} windows/s >= 1000")
