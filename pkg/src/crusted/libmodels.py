"""Built-in contracts for the C Standard Library and POSIX functions.

The models are written out as Python values rather than parsed from
annotated source, so comparing them against annotated transcriptions is a
genuine cross-check of the resolver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from crusted.annotations import (INIT_ON_SUCCESS, MAYBE_UNINIT, AnnotatedSignature, Contract,
                                 CType, StructInfo, Tables, TypeInfo, pointer_to, scalar)
from crusted.domains import INF, MultiInterval
from crusted.source import Span

_BUILTIN = Span("<builtin>", 0, 0)

FD_RESOURCE = "open-file-description"
HEAP_RESOURCE = "heap-memory"
STREAM_RESOURCE = "stream"

# allocation functions whose result is NULL when any listed size argument is 0
ZERO_SIZE_NULL = {"malloc": (0,), "calloc": (0, 1)}


@dataclass(frozen=True)
class FunctionModel:
    library: str
    signature: AnnotatedSignature
    origin: str  # name used in leak messages ("obtained from open()")


@dataclass
class LibraryModel:
    functions: dict = field(default_factory=dict)  # name -> FunctionModel
    types: dict = field(default_factory=dict)  # typedef name -> (library, TypeInfo)
    structs: dict = field(default_factory=dict)  # struct name -> (library, StructInfo)
    globals: dict = field(default_factory=dict)  # name -> (library, Contract)
    constants: dict = field(default_factory=dict)  # name -> (library, value)

    @property
    def libraries(self) -> set:
        libs = {m.library for m in self.functions.values()}
        libs |= {lib for lib, _ in self.types.values()}
        return libs

    def signature(self, name: str) -> AnnotatedSignature | None:
        m = self.functions.get(name)
        return m.signature if m else None

    def install(self, tables: Tables, libs: set) -> None:
        """Copy the models of the activated libraries into ``tables``."""
        for name, (lib, info) in self.structs.items():
            if lib in libs:
                tables.structs[name] = info
        for name, (lib, info) in self.types.items():
            if lib in libs:
                tables.types[name] = info
        for name, m in self.functions.items():
            if m.library in libs:
                tables.signatures[name] = m.signature
        for name, (lib, c) in self.globals.items():
            if lib in libs:
                tables.globals[name] = c
        for name, (lib, v) in self.constants.items():
            if lib in libs:
                tables.constants[name] = v


def _param(ctype: CType, **kw) -> Contract:
    return Contract(ctype=ctype, **kw)


def _const_char_ptr() -> CType:
    return pointer_to(CType("int", "char", const=True, signed=True, bits=8))


def _typed(t: CType, name: str, nominal: str | None = None) -> CType:
    return replace(t, typedef=name, nominal=nominal)


def builtin_models() -> LibraryModel:
    m = LibraryModel()
    void = scalar("void")
    int_t = scalar("int")
    size_t = scalar("size_t")
    nonneg = MultiInterval.of((0, INF))

    # <stdlib.h>: malloc, calloc, free
    void_ptr = pointer_to(void)
    m.functions["malloc"] = FunctionModel("stdlib", AnnotatedSignature(
        "malloc", (_param(size_t),), ("size",),
        Contract(void_ptr, sentinel="NULL", owning="heap", init=MAYBE_UNINIT,
                 resource_class=HEAP_RESOURCE, explicit=True),
        annotated=True), "malloc")
    m.functions["calloc"] = FunctionModel("stdlib", AnnotatedSignature(
        "calloc", (_param(size_t), _param(size_t)), ("nmemb", "size"),
        Contract(void_ptr, sentinel="NULL", owning="heap", resource_class=HEAP_RESOURCE,
                 explicit=True),
        annotated=True), "calloc")
    m.functions["free"] = FunctionModel("stdlib", AnnotatedSignature(
        "free",
        (Contract(void_ptr, sentinel="NULL", owning="heap", release=True,
                  resource_class=HEAP_RESOURCE, explicit=True),),
        ("ptr",), Contract(void), annotated=True), "free")

    # <fcntl.h>/<unistd.h>: file descriptors, open, close, read
    fd_t = _typed(int_t, "fd_t", "fd_t")
    fd_own_t = _typed(int_t, "fd_own_t", "fd_t")
    fd_opt_own_t = _typed(int_t, "fd_opt_own_t", "fd_t")
    own = ("e_own", None, _BUILTIN)
    opt = ("e_opt", -1, _BUILTIN)
    for lib in ("fcntl", "unistd"):
        # both headers expose the descriptor types; fcntl wins for the record
        m.types.setdefault("fd_t", (lib, TypeInfo("fd_t", fd_t, None, "fd_t", nonneg,
                                                  frozenset(), False, (), True)))
        m.types.setdefault("fd_own_t", (lib, TypeInfo("fd_own_t", fd_own_t, "fd_t", "fd_t",
                                                      nonneg, frozenset(), False, (own,), True)))
        m.types.setdefault("fd_opt_own_t", (lib, TypeInfo(
            "fd_opt_own_t", fd_opt_own_t, "fd_own_t", "fd_t", nonneg, frozenset(), False,
            (own, opt), True)))
    m.functions["open"] = FunctionModel("fcntl", AnnotatedSignature(
        "open", (_param(_const_char_ptr(), borrow="shared"), _param(int_t)), ("path", "oflag"),
        Contract(fd_opt_own_t, sentinel=-1, owning="resource", values=nonneg,
                 resource_class=FD_RESOURCE, explicit=True),
        annotated=True), "open")
    m.functions["close"] = FunctionModel("unistd", AnnotatedSignature(
        "close",
        (Contract(fd_own_t, owning="resource", values=nonneg, resource_class=FD_RESOURCE,
                  explicit=True),),
        ("fildes",),
        Contract(int_t, values=MultiInterval.of((-1, 0)), explicit=True),
        annotated=True), "close")
    ssize_t = scalar("ssize_t")
    m.functions["read"] = FunctionModel("unistd", AnnotatedSignature(
        "read",
        (Contract(fd_t, borrow="shared", values=nonneg, explicit=True),
         Contract(void_ptr, borrow="exclusive", init=INIT_ON_SUCCESS, explicit=True),
         _param(size_t)),
        ("fildes", "buf", "nbyte"),
        Contract(ssize_t, sentinel=-1, values=nonneg, explicit=True),
        annotated=True), "read")

    # <stdio.h>: FILE, fopen, fclose
    file_struct = CType("struct", "struct FILE")
    unsigned = scalar("unsigned")
    m.structs["struct FILE"] = ("stdio", StructInfo(
        "struct FILE", (("flags", Contract(unsigned)),), frozenset({"FILE"}), False))
    file_t = _typed(file_struct, "FILE")
    fp_t = _typed(pointer_to(file_t), "fp_t")
    fp_own_t = _typed(pointer_to(file_t), "fp_own_t")
    fp_opt_own_t = _typed(pointer_to(file_t), "fp_opt_own_t")
    m.types["FILE"] = ("stdio", TypeInfo("FILE", file_t, None, None, None,
                                         frozenset({"FILE"}), False, (), True))
    m.types["fp_t"] = ("stdio", TypeInfo("fp_t", fp_t, None, None, None, frozenset(), False,
                                         (), False))
    m.types["fp_own_t"] = ("stdio", TypeInfo("fp_own_t", fp_own_t, "fp_t", None, None,
                                             frozenset(), False, (own,), True))
    m.types["fp_opt_own_t"] = ("stdio", TypeInfo(
        "fp_opt_own_t", fp_opt_own_t, "fp_own_t", None, None, frozenset(), False,
        (own, ("e_opt", "NULL", _BUILTIN)), True))
    restrict_str = _param(_const_char_ptr(), borrow="shared")
    m.functions["fopen"] = FunctionModel("stdio", AnnotatedSignature(
        "fopen", (restrict_str, restrict_str), ("filename", "mode"),
        Contract(fp_opt_own_t, sentinel="NULL", owning="resource",
                 resource_class=STREAM_RESOURCE, explicit=True),
        annotated=True), "fopen")
    m.functions["fclose"] = FunctionModel("stdio", AnnotatedSignature(
        "fclose",
        (Contract(fp_own_t, owning="resource", resource_class=STREAM_RESOURCE, explicit=True),),
        ("fp",),
        Contract(int_t, values=MultiInterval.of((-1, -1), (0, 0)), explicit=True),
        annotated=True), "fclose")
    m.constants["EOF"] = ("stdio", -1)

    # <errno.h>
    m.globals["errno"] = ("errno", Contract(int_t))
    m.constants["EBADF"] = ("errno", 9)
    m.constants["O_RDONLY"] = ("fcntl", 0)
    return m


def origin_of(models: LibraryModel | None, function: str) -> str:
    if models is not None and function in models.functions:
        return models.functions[function].origin
    return function
