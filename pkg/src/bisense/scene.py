"""Bistatic scene geometry: path delays, Doppler, gains, and beam mismatch.

Positions are 2D in meters. The transmitter and receiver are stationary;
a single moving point target generates the reflected path. Angles at the
terminals are measured from the baseline (the line joining transmitter and
receiver), which is also the convention the geometry solver inverts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .waveform import SPEED_OF_LIGHT, FrameConfig


@dataclass
class Scene:
    """One realization of the bistatic layout.

    heading_offset is the angle (rad) between the target velocity vector
    and the bisector of the bistatic angle; only speed*cos(heading_offset)
    is observable. aod_pointed / aoa_pointed are the beam-steering angles
    actually used by the arrays; None means matched to the true geometry.
    """

    p_tx: np.ndarray
    p_rx: np.ndarray
    p_target: np.ndarray
    speed: float
    heading_offset: float = 0.0
    rcs: float = 1.0
    los_blocked: bool = True
    n_tx_antennas: int = 1
    n_rx_antennas: int = 1
    aod_pointed: float | None = None
    aoa_pointed: float | None = None

    def __post_init__(self):
        self.p_tx = np.asarray(self.p_tx, dtype=float)
        self.p_rx = np.asarray(self.p_rx, dtype=float)
        self.p_target = np.asarray(self.p_target, dtype=float)
        if self.rcs <= 0:
            raise ValueError("rcs must be positive")
        if self.n_tx_antennas < 1 or self.n_rx_antennas < 1:
            raise ValueError("antenna counts must be at least 1")
        if self.speed < 0:
            raise ValueError("speed is a magnitude and cannot be negative")


@dataclass
class Propagation:
    """Derived propagation quantities for one scene."""

    d_tx: float
    d_rx: float
    baseline_dist: float
    bistatic_range: float
    delay_nlos: float
    delay_los: float
    bistatic_angle: float
    v_bis: float
    doppler: float
    aod: float
    aoa: float
    gain_nlos: complex
    gain_los: complex | None
    beam_gain: complex
    collinear: bool = field(default=False)


def _angle_from_baseline(corner: np.ndarray, other_end: np.ndarray, target: np.ndarray) -> float:
    """Angle at `corner` between the baseline toward `other_end` and the target."""
    u = other_end - corner
    v = target - corner
    denom = np.linalg.norm(u) * np.linalg.norm(v)
    cosang = float(np.dot(u, v) / denom)
    return float(np.arccos(np.clip(cosang, -1.0, 1.0)))


def _steering(theta: float, n_antennas: int) -> np.ndarray:
    """Unit-norm uniform linear array response at half-wavelength spacing."""
    idx = np.arange(n_antennas)
    return np.exp(1j * np.pi * idx * np.sin(theta)) / np.sqrt(n_antennas)


def beamforming_gain(scene: Scene) -> complex:
    """Combined transmit/receive beam gain for the reflected path.

    The arrays point at the assumed angles and the path arrives at the true
    ones; matched pointing gives |gain| = 1 exactly. Single-antenna
    terminals always give exactly 1.
    """
    aod, aoa = _terminal_angles(scene)
    aod_hat = scene.aod_pointed if scene.aod_pointed is not None else aod
    aoa_hat = scene.aoa_pointed if scene.aoa_pointed is not None else aoa
    a_rx_true = _steering(aoa, scene.n_rx_antennas)
    a_rx_used = _steering(aoa_hat, scene.n_rx_antennas)
    a_tx_true = _steering(aod, scene.n_tx_antennas)
    a_tx_used = _steering(aod_hat, scene.n_tx_antennas)
    return complex(np.vdot(a_rx_used, a_rx_true) * np.vdot(a_tx_true, a_tx_used))


def _terminal_angles(scene: Scene) -> tuple[float, float]:
    aod = _angle_from_baseline(scene.p_tx, scene.p_rx, scene.p_target)
    aoa = _angle_from_baseline(scene.p_rx, scene.p_tx, scene.p_target)
    return aod, aoa


def derive_propagation(scene: Scene, cfg: FrameConfig) -> Propagation:
    """Compute delays, Doppler, bistatic angle, and complex path gains.

    A target collinear with the terminals yields a degenerate bistatic
    angle (0 or pi); the result is reported with the collinear flag set
    rather than raised, since downstream estimators must cope with near
    degenerate draws anyway.
    """
    d_tx = float(np.linalg.norm(scene.p_tx - scene.p_target))
    d_rx = float(np.linalg.norm(scene.p_target - scene.p_rx))
    baseline = float(np.linalg.norm(scene.p_tx - scene.p_rx))
    if d_tx == 0.0 or d_rx == 0.0:
        raise ValueError("target coincides with a terminal")
    if baseline == 0.0:
        raise ValueError("transmitter and receiver coincide")

    r_bis = d_tx + d_rx
    tau_nlos = r_bis / SPEED_OF_LIGHT
    tau_los = baseline / SPEED_OF_LIGHT

    cos_beta = (d_tx**2 + d_rx**2 - baseline**2) / (2.0 * d_tx * d_rx)
    collinear = abs(abs(cos_beta) - 1.0) < 1e-12
    beta = float(np.arccos(np.clip(cos_beta, -1.0, 1.0)))

    lam = cfg.wavelength
    v_bis = scene.speed * np.cos(scene.heading_offset)
    doppler = 2.0 * v_bis * np.cos(beta / 2.0) / lam

    aod, aoa = _terminal_angles(scene)
    beam = beamforming_gain(scene)

    gain_nlos = (
        np.exp(-2j * np.pi * cfg.carrier_freq * tau_nlos)
        * lam
        * np.sqrt(scene.rcs)
        / ((4.0 * np.pi) ** 1.5 * d_tx * d_rx)
    )
    gain_los = None
    if not scene.los_blocked:
        gain_los = complex(
            np.exp(-2j * np.pi * cfg.carrier_freq * tau_los)
            * lam
            / (4.0 * np.pi * baseline)
        )

    return Propagation(
        d_tx=d_tx,
        d_rx=d_rx,
        baseline_dist=baseline,
        bistatic_range=r_bis,
        delay_nlos=tau_nlos,
        delay_los=tau_los,
        bistatic_angle=beta,
        v_bis=float(v_bis),
        doppler=float(doppler),
        aod=aod,
        aoa=aoa,
        gain_nlos=complex(gain_nlos),
        gain_los=gain_los,
        beam_gain=beam,
        collinear=collinear,
    )
