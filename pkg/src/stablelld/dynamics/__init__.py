"""Interval maps, heavy-tailed observables and twisted transfer operators."""

from .maps import (IntervalMap, Orbit, afu_map, doubling_map, gauss_density, gauss_map,
                   invariant_density, make_map, orbit, parry_density)
from .observables import Observable
from .transfer import (EigenCurve, EigenData, TransferModel, assemble_transfer, cell_edges,
                       eigencurve, leading_eig, spectral_hypothesis_report)
from .lld import (OperatorPanels, birkhoff_hits, birkhoff_lld_sweep, dynamic_norming,
                  filon_weights, operator_lld_bound, operator_panels, pullback_probability)
