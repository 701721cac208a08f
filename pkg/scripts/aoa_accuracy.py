"""Bearing error statistics against SNR, and the elevation bias against range.

The second table shows how far the far-field profile model drifts in elevation
when the transmitter is close: wavefront curvature across the quarter-turn arc
looks like a non-zero elevation angle.
"""

import argparse

import numpy as np

from csi_rendezvous.aoa import compute_profile, extract_peaks, refine_peaks, wrap_angle
from csi_rendezvous.channel import QuarterTurn, RadioEnvironment, propagation_paths, synthesize_csi
from csi_rendezvous.rng import substream


def top_peak(env, rx, yaw, tx, rng, jitter):
    arc = QuarterTurn(tuple(rx), yaw, heading_jitter=jitter)
    snaps = synthesize_csi(env, propagation_paths(env, tx, rx)[:1], arc, rng)
    return refine_peaks(extract_peaks(compute_profile(snaps), 4), snaps).top


def bearing_errors(snr_db, n, seed, jitter_deg):
    env = RadioEnvironment(noise_snr_db=snr_db)
    rng = substream(seed, "channel")
    errs = []
    for _ in range(n):
        rx = np.array([*rng.uniform(5, 40, 2), 0.0])
        yaw, bearing = rng.uniform(-np.pi, np.pi, 2)
        tx = rx + rng.uniform(1.0, 10.0) * np.array([np.cos(bearing), np.sin(bearing), 0.0])
        top = top_peak(env, rx, yaw, tx, rng, np.radians(jitter_deg))
        errs.append(np.degrees(wrap_angle(top.theta - wrap_angle(bearing - yaw))))
    return np.array(errs)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jitter-deg", type=float, default=2.0)
    args = ap.parse_args()

    print(f"{'snr dB':>7} {'mean':>7} {'std':>7} {'p95 |err|':>9}")
    for snr in (0.0, 10.0, 20.0, 30.0):
        e = bearing_errors(snr, args.n, args.seed, args.jitter_deg)
        print(f"{snr:>7.0f} {e.mean():>7.2f} {e.std():>7.2f} {np.percentile(np.abs(e), 95):>9.2f}")

    env = RadioEnvironment()
    rx = np.array([10.0, 10.0, 0.0])
    print(f"\n{'range m':>7} {'worst phi deg':>13}")
    for d in (0.3, 0.5, 0.7, 0.8, 1.0, 1.5, 2.2, 5.0):
        worst = 0.0
        for b in np.radians(np.arange(-180, 180, 15)):
            tx = rx + d * np.array([np.cos(b), np.sin(b), 0.0])
            worst = max(worst, np.degrees(top_peak(env, rx, 0.0, tx, None, 0.0).phi))
        print(f"{d:>7.1f} {worst:>13.2f}")


if __name__ == "__main__":
    main()
