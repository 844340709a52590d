"""Iterative refinement with an auditable dual-path ledger.

Each refinement block consumes the underlying-information flow together
with the running subtractive residual (the S-path input) and emits a
correction; corrections accumulate onto the pre-enhanced spectrum
through the additive skip path.  With the fixed left-to-right summation
order, two identities hold bit-exactly for any parameters:

    s_inputs[i] == p - sum_{j<i} f[j]
    output      == p + sum_i   f[i]

The ledger records every term so the identities can be re-verified
independently, and block output projections start at zero so an
untrained stack is exactly the identity around the pre-enhancer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import AuditError, ConfigError, ShapeError
from .uie import CausalConv2d, comb_salience, pitch_attention, planes_of

MAX_REFINEMENTS = 8
_MAG_EPS = 1e-12


class Refinement(nn.Module):
    """One correction block: channel-mixing conv, template gate, output conv.

    The gate mirrors the harmonic-attention construction: a comb-template
    map computed from the block's own S-path input modulates the mixed
    channels through a learned per-channel affine and a sigmoid.
    """

    def __init__(self, channels: int, comb: torch.Tensor, temperature: float):
        super().__init__()
        self.temperature = float(temperature)
        self.register_buffer("comb", comb)
        self.mix = CausalConv2d(channels + 2, channels)
        self.gate_scale = nn.Parameter(torch.ones(channels))
        self.gate_bias = nn.Parameter(torch.zeros(channels))
        self.out = CausalConv2d(channels, 2)
        with torch.no_grad():
            self.out.conv.weight.zero_()
            self.out.conv.bias.zero_()

    def forward(self, a: torch.Tensor, s_input: torch.Tensor) -> torch.Tensor:
        re, im = planes_of(s_input)
        feat = torch.cat([torch.stack([re, im], dim=1), a], dim=1)  # (B, C+2, T, F)
        mixed = torch.nn.functional.elu(self.mix(feat))
        comb = self.comb.to(s_input.dtype)
        mag = torch.sqrt(re * re + im * im + _MAG_EPS)
        alpha = pitch_attention(comb_salience(mag, comb), self.temperature)
        template = alpha @ comb  # (B, T, F)
        gate = torch.sigmoid(
            self.gate_scale[None, :, None, None] * template[:, None]
            + self.gate_bias[None, :, None, None]
        )
        corr = self.out(mixed * gate)  # (B, 2, T, F)
        return torch.cat([corr[:, 0], corr[:, 1]], dim=-1)


@dataclass
class RefinementLedger:
    """Per-iteration record of one utterance's refinement pass (T x 2F arrays)."""

    p: np.ndarray
    f: list[np.ndarray] = field(default_factory=list)
    s_inputs: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None


@dataclass
class AuditReport:
    passed: bool
    failures: list[str]
    correction_energy: list[float]
    residual_energy: list[float]

    def __str__(self) -> str:
        lines = [f"ledger audit: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  {msg}" for msg in self.failures]
        for i, (ce, re_) in enumerate(zip(self.correction_energy, self.residual_energy), start=1):
            lines.append(f"  iteration {i}: |f|^2 = {ce:.6e}, residual^2 = {re_:.6e}")
        return "\n".join(lines)


class RefineStack(nn.Module):
    """Runs N refinement blocks with independent parameters."""

    def __init__(self, n_refinements: int, channels: int, comb: torch.Tensor, temperature: float):
        super().__init__()
        if not (0 <= n_refinements <= MAX_REFINEMENTS):
            raise ConfigError(
                f"n_refinements must be in [0, {MAX_REFINEMENTS}] (returns saturate beyond that), got {n_refinements}"
            )
        self.blocks = nn.ModuleList(
            Refinement(channels, comb, temperature) for _ in range(n_refinements)
        )

    def zero_output_projections(self) -> None:
        """Restore the zero output init so the stack starts as the identity."""
        with torch.no_grad():
            for block in self.blocks:
                block.out.conv.weight.zero_()
                block.out.conv.bias.zero_()

    def forward(self, p: torch.Tensor, a: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
        """Returns (output, corrections, s_path_inputs); sums run left to right."""
        if p.dim() != 3:
            raise ShapeError(f"expected (batch, frames, 2F), got {tuple(p.shape)}")
        residual = p
        output = p
        corrections: list[torch.Tensor] = []
        s_inputs: list[torch.Tensor] = []
        for block in self.blocks:
            s_inputs.append(residual)
            f_i = block(a, residual)
            corrections.append(f_i)
            residual = residual - f_i
            output = output + f_i
        return output, corrections, s_inputs


def refine(p: torch.Tensor, a: torch.Tensor, stack: RefineStack) -> RefinementLedger:
    """Run the stack on a single utterance and record the flow ledger."""
    if p.dim() == 2:
        p = p[None]
        a = a[None]
    with torch.no_grad():
        output, corrections, s_inputs = stack(p, a)
    ledger = RefinementLedger(p=p[0].cpu().numpy().copy())
    ledger.f = [f[0].cpu().numpy().copy() for f in corrections]
    ledger.s_inputs = [s[0].cpu().numpy().copy() for s in s_inputs]
    ledger.output = output[0].cpu().numpy().copy()
    return ledger


def ledger_from_flows(p: np.ndarray, flows: list[np.ndarray]) -> RefinementLedger:
    """Assemble a ledger from given corrections (test hook).

    Uses the same fixed left-to-right order as the forward pass, at the
    same precision as the inputs.
    """
    ledger = RefinementLedger(p=np.array(p))
    residual = np.array(p)
    output = np.array(p)
    for f_i in flows:
        ledger.s_inputs.append(residual.copy())
        ledger.f.append(np.array(f_i))
        residual = residual - f_i
        output = output + f_i
    ledger.output = output
    return ledger


def audit_ledger(ledger: RefinementLedger) -> AuditReport:
    """Re-verify both ledger identities and report per-iteration energies.

    Recomputation uses the ledger's own dtype and the fixed left-to-right
    order, so agreement is required to be exact, not approximate.
    """
    if ledger.output is None:
        raise AuditError("ledger has no output recorded")
    failures: list[str] = []
    partial = ledger.p.copy()
    for i, f_i in enumerate(ledger.f):
        if not np.array_equal(ledger.s_inputs[i], partial):
            failures.append(
                f"S-path identity violated at iteration {i + 1}:"
                f" s_inputs[{i}] != p - sum(f[0:{i}])"
            )
        partial = partial - f_i
    total = ledger.p.copy()
    for f_i in ledger.f:
        total = total + f_i
    if not np.array_equal(ledger.output, total):
        failures.append("A-path identity violated at the output")

    correction_energy = [float(np.sum(np.square(f_i, dtype=np.float64))) for f_i in ledger.f]
    residual_energy = []
    running = ledger.p.copy()
    for f_i in ledger.f:
        running = running - f_i
        residual_energy.append(float(np.sum(np.square(running, dtype=np.float64))))
    return AuditReport(
        passed=not failures,
        failures=failures,
        correction_energy=correction_energy,
        residual_energy=residual_energy,
    )
