from __future__ import annotations

import logging
import warnings

import numpy as np
from statsmodels.stats.outliers_influence import OLSInfluence

from ..models.aggregate_table import AggregateTable
from ..models.linear_fit import Diagnostics, LinearFit

logger = logging.getLogger(__name__)

# h_gg this close to 1 is treated as exactly 1
LEVERAGE_ONE = 1e-10


def diagnostics(fit: LinearFit, table: AggregateTable) -> Diagnostics:
    """
    Leverage, Cook's distance D_g = r_g² h_gg / (q (1 − h_gg)) and internally
    studentized residuals per outcome, plus how far the data sit from each
    one-hot plug-in point (1 − max_g x̄_gk).
    """
    J, G = len(fit.results), table.G
    cooks = np.empty((J, G))
    student = np.empty((J, G))
    leverage = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for j, res in enumerate(fit.results):
            infl = OLSInfluence(res)
            h = np.asarray(infl.hat_matrix_diag)
            if leverage is None:
                leverage = h
            student[j] = np.asarray(infl.resid_studentized_internal)
            cooks[j] = np.asarray(infl.cooks_distance[0])

    infinite = leverage >= 1.0 - LEVERAGE_ONE
    cooks[:, infinite] = np.inf
    student[:, infinite] = np.nan
    if infinite.any():
        logger.warning("[Diagnostics] %d geography(ies) with leverage 1; Cook's distance is infinite", int(infinite.sum()))

    gap = 1.0 - table.shares.max(axis=0)
    top = int(np.argmax(np.nan_to_num(cooks.max(axis=0), posinf=np.finfo(float).max)))
    logger.info("[Diagnostics] most influential geography '%s' (Cook's D %.3g)", table.geo[top], cooks[:, top].max())
    return Diagnostics(
        leverage=leverage,
        cooks_distance=cooks,
        studentized_residual=student,
        infinite_flag=infinite,
        extrapolation_gap=gap,
        geo=table.geo,
        categories=table.categories,
        outcomes=fit.outcomes,
    )
