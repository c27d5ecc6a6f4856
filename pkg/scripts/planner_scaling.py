"""Closed-form sample sizes from the planner as d grows.

Prints m_x_min, m_phi_min, the step ceiling and whether m_phi_min stays
below m_x d, for a single-ridge profile with alpha = 1/16 (logistic) and
for a quadratic multi-ridge profile with alpha = 4/d.
"""

from ridgelift import plan_experiment


def main():
    print("profile     d     m_x_min  m_phi_min    eps_ceiling   m_phi<m_x*d  budget class")
    for d in (200, 500, 1000, 2000, 3000):
        rows = [("logistic", plan_experiment(d, 1, 1.0, 1 / 16, eta=0.99, strict=False)),
                ("quadratic", plan_experiment(d, 3, 4.0, 4 / d, eta=0.99, strict=False))]
        for name, plan in rows:
            print(f"{name:<10} {d:>5}  {plan.m_x:>8}  {plan.m_phi:>10}  {plan.epsilon:>12.4e}"
                  f"  {str(plan.mphi_below_mxd):>11}  {plan.complexity['budget']}")


if __name__ == "__main__":
    main()
