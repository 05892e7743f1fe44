"""tracewam: a Prolog abstract machine whose hot predicates run in
specialized emulators compiled from recorded basic-block traces."""

from .compiler import CompileError, LinkError, Program, load_program
from .emulator import (Machine, MachineConfig, MachineError, PrologRuntimeError,
                       QueryResult, ResourceExhausted)
from .reader import PrologSyntaxError

__all__ = ["CompileError", "LinkError", "Machine", "MachineConfig", "MachineError",
           "Program", "PrologRuntimeError", "PrologSyntaxError", "QueryResult",
           "ResourceExhausted", "load_program"]
__version__ = "0.1.0"
