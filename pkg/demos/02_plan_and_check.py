"""Plan the bundled rendezvous scenario and check the result independently.

Four robots on a line: robots 1 and 3 must come within one unit of each
other, and so must robots 2 and 4, at some instant of [40, 60].  Each robot
only talks to the robot it has to meet.  The planner grows one shared set of
vertex times for all robots; the monitor then evaluates the original formula
on the piecewise-linear result without using any planner bookkeeping.
"""

from stlplan.monitor import Trace, satisfies
from stlplan.planner import plan_scenario
from stlplan.scenario import load_bundled

sc = load_bundled("rendezvous")
print("formula:", sc.formula_text)
res = plan_scenario(sc)
b = res.branch
print(f"planner: {'success' if res.success else 'failure'} after {b.iterations} iterations")
print("communication edges:", sorted(res.graph.edges))
print("messages exchanged:", len(res.message_log))
print("meeting instant t* =", round(b.t_star[()], 3))

trace = Trace.from_trees(res.trees)
at = trace.states_at([b.t_star[()]])
print(f"|x1 - x3| = {abs(at[1][0, 0] - at[3][0, 0]):.3f}, |x2 - x4| = {abs(at[2][0, 0] - at[4][0, 0]):.3f}")
print()
print(satisfies(sc.formula, trace).format())
