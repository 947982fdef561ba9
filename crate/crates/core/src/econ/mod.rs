//! Exchange rates and every financial aggregate: lower-bound impact per
//! family, mean payments, cumulative series and the market summary.

pub mod impact;
pub mod rates;

pub use impact::{
    cumulative_series, family_impact, market_summary, mean_payment, payment_set, Bucket, FamilyImpact, ImpactReport,
    MarketShare, MeanPayment, PaymentRecord, PaymentSet, SeriesPoint,
};
pub use rates::{load_rates, utc_date, RateTable};
