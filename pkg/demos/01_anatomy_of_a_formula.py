"""How the planner reads a specification before it samples anything.

A formula is parsed, put in negation normal form, split into one path per
predicate, and every path gets a time window in which its predicate must
hold.  Eventually operators start out as a whole window; once an instant is
drawn for them, the window collapses onto that instant.
"""

from stlplan.formula import enumerate_paths, parse, time_horizon, to_pnf, to_text_formula
from stlplan.validity import EventuallyState, compute_vd

text = "F[0,5](x1 <= 1 || G[0,2](x1 >= -1)) && G[0,10](F[0,5](x2 <= 1)) && !F[0,20](x2 <= -1)"
f = to_pnf(parse(text))
print("input      :", text)
print("normal form:", to_text_formula(f))
print("horizon    :", time_horizon(f), "s")
print()

ev = EventuallyState.for_formula(f)
paths = enumerate_paths(f)


def show(title):
    print(title)
    for p in paths:
        vd = compute_vd(p, f, ev)
        addr = ".".join(map(str, p.address))
        print(f"  [{addr:7}] {vd.kind.value:10} [{vd.lo:5.2f}, {vd.hi:5.2f}]  {to_text_formula(p.leaf)}")
    print()


show("windows before any instant is drawn:")

# draw an instant for the first eventually operator and the one under G
ev[(0,)].T_star = 3.0
ev[(1, 0)].T_star = 4.0
show("after drawing T* = 3 for F[0,5](...) and T* = 4 for the F under G:")
