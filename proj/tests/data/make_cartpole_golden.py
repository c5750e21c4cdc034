# Writes cartpole_golden.csv: a reference rollout of the classic cart-pole
# equations, stepped with explicit Euler from a fixed start and action list.
import math
import random

g, mc, mp, half, force, tau = 9.8, 1.0, 0.1, 0.5, 10.0, 0.02
total = mc + mp
pml = mp * half


def step(s, a):
    x, xd, th, thd = s
    f = force if a == 1 else -force
    c, sn = math.cos(th), math.sin(th)
    temp = (f + pml * thd * thd * sn) / total
    thacc = (g * sn - c * temp) / (half * (4.0 / 3.0 - mp * c * c / total))
    xacc = temp - pml * thacc * c / total
    return (x + tau * xd, xd + tau * xacc, th + tau * thd, thd + tau * thacc)


rng = random.Random(7)
s = (0.01, -0.02, 0.03, 0.015)
rows = ["step,action,x,x_dot,theta,theta_dot"]
for t in range(60):
    a = rng.randint(0, 1)
    s = step(s, a)
    rows.append(",".join([str(t + 1), str(a)] + [repr(v) for v in s]))
with open("cartpole_golden.csv", "w") as f:
    f.write("\n".join(rows) + "\n")
