"""Names reserved for annotations.

Object-like annotations are written bare (``char * e_hown p``); function-like
ones take a parenthesised argument list (``e_opt(NULL)``).
"""

OBJECT_LIKE = (
    "e_hown",
    "e_own",
    "e_excl",
    "e_shar",
    "e_type",
    "e_init",
    "e_uninit",
    "e_fini",
    "e_release",
    "e_opt_hown",
)

FUNCTION_LIKE = (
    "e_opt",
    "e_val",
    "e_geq",
    "e_range",
    "e_eq",
    "e_bop",
    "e_uop",
    "e_in",
    "e_out",
    "e_unsafe",
    "e_checked",
    "e_unchecked",
    "e_declprops",
)

# Annotations that may only appear at file scope and expand to a declaration.
GLOBAL = ("e_bop", "e_uop", "e_declprops")

# Constructors usable only inside e_val(...).
PREDICATES = ("e_geq", "e_range", "e_eq")

ANNOTATION_NAMES = frozenset(OBJECT_LIKE + FUNCTION_LIKE)
