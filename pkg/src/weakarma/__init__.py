"""Self-normalized portmanteau tests for weak ARMA and VARMA models."""
from weakarma.dist import (QuantileTable, chi2_pvalue, chi2_quantile, load_table, save_table,
                           tabulate_table, tabulate_uk, uk_pvalue)
from weakarma.estimate import (InformationMatrices, ParamEstimate, estimate_J, estimate_Phi,
                               qmle_fit, qmle_objective)
from weakarma.model import (ResidualSet, StabilityReport, VarmaSpec, build_matrices,
                            check_stability_invertibility, residual_derivatives, residual_filter)
from weakarma.selfnorm import (AutoCovSet, DiagnosticReport, ar1_c1_oracle, autocov, build_c_hat,
                               build_lambda, build_u_hat, q_sn, q_sn_tilde, q_standard,
                               run_diagnostics)
from weakarma.simulate import (BiArch1, Garch11, MultiPT, MultiPTSquared, MultiRT, ProductPT,
                               ProductPTSquared, RatioRT, RngStream, StrongGaussian,
                               generate_noise, simulate_varma)

__version__ = "0.1.0"
