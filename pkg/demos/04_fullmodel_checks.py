"""Cross-validate the eliminated-cavity description against the 4x4 model.

The working equations treat the cavity as instantaneous (kappa much larger
than Omega_m), replacing it by a backaction diffusion rate Gamma_qba =
4 g^2 / kappa on the mechanics. This script runs the packaged consistency
report for the reference parameters, then degrades the sideband resolution
to show the adiabatic description falling apart at the expected quadratic
rate.

Run:  python3 demos/04_fullmodel_checks.py
"""

import math

import retrodyn as rd


def show(report):
    for rec in report:
        mark = "ok " if rec["pass"] else "FAIL"
        print(f"  [{mark}] {rec['name']:32s} value {rec['value']:+.6e}  "
              f"ref {rec['reference']:+.6e}  tol {rec['tolerance']:.0e}")


def params_with_kappa_factor(factor):
    base = rd.default_params()
    kappa = factor * base.omega_m
    # hold Gamma_qba fixed while shrinking kappa: g = sqrt(qba kappa / 4)
    g = math.sqrt(base.gamma_qba * kappa / 4.0)
    return rd.PhysParams(gamma_m=base.gamma_m, n_th=base.n_th,
                         gamma_qba=base.gamma_qba, eta_det=base.eta_det,
                         omega_m=base.omega_m, kappa=kappa, g=g, delta=0.0)


def main():
    p = rd.default_params()
    print(f"reference cavity: kappa / Omega_m = {p.kappa / p.omega_m:.2f}")
    show(rd.adiabatic_consistency_check(p))
    print()

    print("degrading sideband resolution (Gamma_qba held fixed):")
    v_uc = rd.derive_rates(p).v_uc
    for factor in (30.0, 16.0, 10.0, 5.0):
        pk = params_with_kappa_factor(factor)
        report = rd.adiabatic_consistency_check(pk)
        mech = next(r for r in report if r["name"] == "mech_marginal_vs_v_uc")
        dev = abs(mech["value"] / v_uc - 1.0)
        scaled = dev * factor ** 2
        status = "pass" if mech["pass"] else "FAIL"
        print(f"  kappa = {factor:5.1f} Omega_m: marginal off by "
              f"{100 * dev:6.3f}%  [{status}]   dev x (kappa/Omega)^2 = "
              f"{scaled:.2f}")
    print()
    print("the scaled deviation is near-constant: the adiabatic error is "
          "O((Omega_m/kappa)^2), as the elimination predicts")


if __name__ == "__main__":
    main()
