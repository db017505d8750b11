"""Regenerate the FCIDUMP fixtures and their reference energies.

Requires PySCF. Every dump is an active-space Hamiltonian in chemists'
notation; N2 dumps freeze the two N 1s-derived orbitals.
"""
import json
import os

from pyscf import fci, gto, mcscf, scf
from pyscf.tools import fcidump

HERE = os.path.dirname(os.path.abspath(__file__))


def dump(name, atom, ncore=0, basis="sto-3g"):
    mol = gto.M(atom=atom, basis=basis, unit="Angstrom", verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.kernel()
    assert mf.converged, name
    norb = mol.nao - ncore
    nelec = mol.nelectron - 2 * ncore
    cas = mcscf.CASCI(mf, norb, nelec)
    cas.fcisolver.conv_tol = 1e-13
    h1, ecore = cas.get_h1eff()
    eri = cas.get_h2eff()
    path = os.path.join(HERE, name + ".fcidump")
    fcidump.from_integrals(path, h1, eri, norb, nelec, ecore, ms=0, tol=1e-15, float_format="%.17e")
    e_fci, _ = fci.direct_spin1.kernel(h1, eri, norb, nelec, ecore=ecore, conv_tol=1e-13)
    return {"file": name + ".fcidump", "norb": norb, "nelec": nelec, "e_hf": mf.e_tot, "e_fci": e_fci}


def main():
    refs = []
    refs.append(dump("h2_sto3g", "H 0 0 0; H 0 0 0.74"))
    refs.append(dump("h4_sto3g", "H 0 0 0; H 0 0 1.0; H 0 0 2.0; H 0 0 3.0"))
    refs.append(dump("h2o_sto3g", "O 0 0 0.1173; H 0 0.7572 -0.4692; H 0 -0.7572 -0.4692"))
    for r in (1.1, 1.0, 1.3, 1.6, 2.1, 2.5):
        refs.append(dump("n2_sto3g_fc_r%.2f" % r, "N 0 0 0; N 0 0 %.4f" % r, ncore=2))
    with open(os.path.join(HERE, "reference.json"), "w") as f:
        json.dump(refs, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
