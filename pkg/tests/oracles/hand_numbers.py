"""
Reference numbers worked out by hand from the closed-form rate formulas
"""

import math

# 1 - 2 eta c + eta^2 L^2
GAMMA_ORACLE_SGD = 1.0 - 2.0 * 0.05 * 0.5 + 0.05 ** 2 * 2.0 ** 2  # eta 0.05, c 0.5, L 2
GAMMA_PROX_SGD = 1.0 - 2.0 * 0.1 * 1.0 + 0.1 ** 2 * 2.0 ** 2  # eta 0.1, c 1, L 2

# max{gamma + b L^2, (eta^2/b + N - 1)/N} at eta 0.1, b 0.02, N 10, c 1, L 2
SAGA_BRANCHES = (0.84 + 0.02 * 4.0, (0.01 / 0.02 + 9.0) / 10.0)
SAGA_ALPHA = max(SAGA_BRANCHES)

# 1/(c eta (1 - 2 L eta) N) + 2 L eta/(1 - 2 L eta) at eta 0.1, c 1, L 1, N 100
SVRG_QUADRATIC_ALPHA = 1.0 / (0.1 * 0.8 * 100.0) + 0.2 / 0.8

# alpha^m + kappa (1 - alpha^m)/(1 - alpha) at alpha 0.5, kappa 0.25, m 2
SVRG_XI = 0.25 + 0.25 * 0.75 / 0.5

# 1 - theta + theta^2/(M c eta) at eta 0.1, theta 0.5, M 10, c 1
ASVRG_ALPHA = 0.5 + 0.25 / 1.0

# K = 0.95, M = 5, eta^2 L^2 |S^C| / (N (1 - K)) = 0.04 * 5 / 0.5 = 0.4
HSAG_K = 0.95
HSAG_ALPHA = 0.95 ** 5 + 0.4 * (1.0 - 0.95 ** 5)

# eps/(kappa (1 - alpha)) at eps 0.01, alpha 0.9, kappa 0.5
MARKOV_TAIL = 0.01 / (0.5 * 0.1)

# eps/(1 - alpha) at alpha 0.5, eps 0.1
ERROR_LIMIT = 0.1 / 0.5

# zeta = sqrt(q) = 0.5 for c 1, theta 3: beta = zeta (1 - zeta)/(zeta^2 + zeta)
CATALYST_Q = 0.25
CATALYST_ZETA = math.sqrt(CATALYST_Q)
CATALYST_BETA = 1.0 / 3.0

# uniform on {-1, 0, 2} against the Dirac at 0
WV_DIRAC = (1.0 + 0.0 + 4.0) / 3.0

SOFT_THRESHOLD = 0.7
