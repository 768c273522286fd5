"""Random connected systems tuned inside the certificate region."""
import numpy as np

from gfmcert.certificates import active_alpha_max, reactive_alpha_max, table1_coeffs
from gfmcert.devices import ConverterSpec
from gfmcert.netmodel import NetworkSpec


def random_network(rng, n_min=3, n_max=5, rho_range=(0.02, 0.3), b_range=(0.5, 10.0), extra=0.4):
    n = int(rng.integers(n_min, n_max + 1))
    rho = rng.uniform(*rho_range)
    b = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):             # random spanning tree keeps it connected
        i, j = order[k], order[rng.integers(0, k)]
        b[i, j] = b[j, i] = rng.uniform(*b_range)
    for i in range(n):
        for j in range(i + 1, n):
            if b[i, j] == 0 and rng.random() < extra:
                b[i, j] = b[j, i] = rng.uniform(*b_range)
    return NetworkSpec(b=b, rho=rho, v0=rng.uniform(0.9, 1.1, n), delta0=np.zeros(n))


def certified_converters(rng, net, tau_range=(0.005, 0.5)):
    """Gains drawn uniformly below the largest feasible coupling strength."""
    c = table1_coeffs(net.rho, net.vmax)
    out = []
    for i in range(net.n):
        tp, tq = rng.uniform(*tau_range, 2)
        ap = rng.uniform() * active_alpha_max(tp * net.omega0, c)
        aq = rng.uniform() * reactive_alpha_max(tq * net.omega0, c)
        deg = net.degree[i]
        out.append(ConverterSpec(max(ap, 1e-9) / (net.vmax ** 2 * deg),
                                 max(aq, 1e-9) * net.v0[i] / deg, tp, tq, name=f"GFM{i + 1}"))
    return out


def random_certified_system(rng, **kw):
    net = random_network(rng, **kw)
    return net, certified_converters(rng, net)
