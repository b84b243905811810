"""Exception hierarchy shared by all modules.

Configuration problems (bad netlists, bad config files) derive from
:class:`ConfigError`; problems detected while solving the physics derive from
:class:`PhysicsError`. The command line maps these onto distinct exit codes.
"""

from __future__ import annotations


class EomnetError(Exception):
    """Base class for all package errors."""


class ConfigError(EomnetError):
    """Invalid user input: config file, netlist text, parameter values."""


class PhysicsError(EomnetError):
    """The requested physical quantity does not exist or cannot be computed."""


# netlist -------------------------------------------------------------------


class NetlistError(ConfigError):
    """Structural problem in a netlist."""


class NetlistSyntaxError(NetlistError):
    """Unparseable netlist statement; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DanglingNode(NetlistError):
    """A node touches only one element terminal."""


class NonPositiveValue(NetlistError):
    """An element value or temperature is out of range."""


class MissingCoupleDirective(NetlistError):
    """No ``.couple`` directive was given."""


class SelfLoop(NetlistError):
    """An element connects a node to itself."""


class SingularNetwork(PhysicsError):
    """The nodal matrix is singular or too badly conditioned to trust."""


# couplings -----------------------------------------------------------------


class NegativeStiffness(PhysicsError):
    """The bias-softened mechanical spring constant is not positive."""


class DecoupledMechanics(PhysicsError):
    """The coupling parameter G vanishes so the mechanical branch is open."""


# equivalent circuit --------------------------------------------------------


class SidebandOutOfRange(PhysicsError):
    """Modulation frequency reaches or exceeds a carrier frequency."""


class SidebandGuardViolation(PhysicsError):
    """Modulation frequency exceeds the slow-mechanics validity guard."""


class NoRoot(PhysicsError):
    """No zero of the loaded mechanical reactance inside the bracket."""


class MultipleRootsWarning(UserWarning):
    """Several reactance zeros in the bracket (normal-mode splitting)."""


# scattering / noise --------------------------------------------------------


class NonPositiveLabFrequency(PhysicsError):
    """A channel would sit at a non-positive lab-frame frequency."""


class UnpairedChannels(PhysicsError):
    """Homodyne readout channels do not form an upper/lower sideband pair."""


class ZeroTransfer(PhysicsError):
    """Signal transfer is too small for the added noise to be defined."""


# reduce --------------------------------------------------------------------


class AdiabaticityViolated(PhysicsError):
    """Mechanical linewidth exceeds an eliminated mode's linewidth."""


class AdiabaticityWarning(UserWarning):
    """Mechanical linewidth is not much narrower than the eliminated modes."""


# oracle --------------------------------------------------------------------


class NotConverged(PhysicsError):
    """Time-domain transient has not decayed by the end of the run."""


class UnstableSystem(PhysicsError):
    """Time-domain state grows without bound."""
