"""Shared constants for the flat system layout used by both kernel backends."""

# controller type codes
AC_GFM, DC_GFM, HYBRID, ENERGY_BAL = 0, 1, 2, 3

# IPC parameter vector slots
P_WSET, P_VDCSET, P_PACSET, P_PDCSET, P_WTSET, P_QSET, P_VSET = range(7)
P_KPAC, P_KQAC, P_KPDC, P_KWAC, P_KWDC = range(7, 12)
P_TAUAC, P_TAUDC, P_TAUQ, P_KPW, P_KIW, P_PLLKP, P_PLLKI, P_LAG = range(12, 20)
N_IPC_PAR = 20

# state slots per IPC (slot 0 is always the stored energy)
N_IPC_STATE = 7

# observables per entity
N_OBS_SRC = 3       # P, Q, omega
N_OBS_PLL = 3       # P, omega, |V|
N_OBS_IPC = 6       # P_ac, Q_ac, P_dc, omega, V_dc terminal, E
N_OBS_DCSRC = 2     # P, V
N_OBS_BUS = 2       # |V|, angle

# status codes returned by the kernels
OK = 0
FREQ_DEV = 1
VDC_DEV = 2
ENERGY_COLLAPSE = 3
AC_NO_FORMING = 4
AC_NEWTON = 5
DC_NO_FORMING = 6
DC_NEWTON = 7
PLL_DEAD_BUS = 8
NON_FINITE = 9
DC_INFEASIBLE = 10
DC_COLLAPSE = 11

REASONS = {
    FREQ_DEV: "frequency deviation above threshold",
    VDC_DEV: "DC voltage deviation above threshold",
    ENERGY_COLLAPSE: "MMC stored energy collapsed",
    AC_NO_FORMING: "AC island without a voltage-forming device",
    AC_NEWTON: "AC network solve did not converge",
    DC_NO_FORMING: "DC island without a voltage-forming device",
    DC_NEWTON: "DC network solve did not converge",
    PLL_DEAD_BUS: "PLL lost synchronization on a dead bus",
    NON_FINITE: "non-finite state",
    DC_INFEASIBLE: "DC node voltage has no real solution",
    DC_COLLAPSE: "DC node voltage collapsed",
}

FREQ_LIMIT = 0.1
VDC_LIMIT = 0.5
DEAD_BUS_V = 0.1
DEAD_BUS_T = 0.02
