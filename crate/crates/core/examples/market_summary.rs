//! Market shares from published per-family totals. The largest fifteen
//! families plus a residual for all the others add up to USD 12,768,536.

use flowtrace::econ::{market_summary, FamilyImpact};
use flowtrace::money::Cents;

const FAMILIES: [(&str, usize, u64); 15] = [
    ("Locky", 6827, 7_834_737),
    ("CryptXXX", 1304, 1_878_696),
    ("DMALockerv3", 147, 1_500_630),
    ("SamSam", 41, 599_687),
    ("CryptoLocker", 944, 519_991),
    ("GlobeImposter", 1, 116_014),
    ("WannaCry", 6, 102_703),
    ("CryptoTorLocker2015", 94, 67_221),
    ("APT", 2, 31_971),
    ("NoobCrypt", 17, 25_080),
    ("Globe", 49, 24_319),
    ("Globev3", 18, 16_008),
    ("EDA2", 23, 15_111),
    ("NotPetya", 1, 11_458),
    ("Razy", 1, 8_073),
];
const MARKET_USD: u64 = 12_768_536;

fn main() -> flowtrace::Result<()> {
    let mut impacts: Vec<FamilyImpact> = FAMILIES
        .iter()
        .map(|&(family, addresses, usd)| FamilyImpact {
            family: family.into(),
            addresses,
            payments: addresses,
            total_sat: 0,
            total_usd: Cents::from_dollars(usd),
            empty: false,
        })
        .collect();
    let listed: u64 = FAMILIES.iter().map(|f| f.2).sum();
    impacts.push(FamilyImpact {
        family: "other".into(),
        addresses: 0,
        payments: 0,
        total_sat: 0,
        total_usd: Cents::from_dollars(MARKET_USD - listed),
        empty: false,
    });
    let report = market_summary(&impacts)?;
    for f in report.families.iter().take(5) {
        println!("{:<14} {:>10} {:>6.2}%", f.family, f.total_usd.whole_dollars(), f.share * 100.0);
    }
    println!("total USD {}", report.total_usd.whole_dollars());
    println!("top family {:.1}%, top three {:.1}%", report.top_share(1) * 100.0, report.top_share(3) * 100.0);
    Ok(())
}
