"""Walk through a certified local inverse of x -> x^3 + x.

Run with ``python3 demos/local_inversion.py``.
"""


from localinv import build_chart, invert
from localinv.inversion import inverse_derivative, numerical_inverse_derivative
from localinv.suite import get_problem


def main():
    f = get_problem("cubic").map
    chart = build_chart(f, [1.0], initial_radius=0.4, seed=0)
    cert = chart.certificate
    print(f"chart at a=1: f(a)={chart.image[0]:g}, body radius {chart.body.radius:g}, "
          f"target radius s={chart.s:g}")
    print(f"  certificate {cert.classification}, Lipschitz estimate {cert.lipschitz:.4f}")

    for y in (1.5, 2.0, 2.5):
        x = invert(chart, [y])
        print(f"  invert({y}) = {x[0]:.12f}   residual {abs(f(x)[0] - y):.1e}")

    D = inverse_derivative(chart, chart.image)
    Dfd = numerical_inverse_derivative(chart)
    print(f"  inverse derivative at f(a): {D[0, 0]:.6f} (finite differences {Dfd[0, 0]:.8f})")

    try:
        invert(chart, [2.0 + 2 * chart.s])
    except ValueError as exc:
        print(f"  out of reach: {exc}")


if __name__ == "__main__":
    main()
