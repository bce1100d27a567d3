//! Fit the Gaussian copula and see which points fall inside the
//! plausibility band.

use semifax::data::{gen_loan_scenario, RawValue};
use semifax::density::{fit_copula, g2_violation, PlausibilityBand};

fn main() -> semifax::Result<()> {
    let data = gen_loan_scenario(7, 1000)?;
    let copula = fit_copula(&data)?;
    let band = PlausibilityBand::new(&copula, 1.5)?;
    println!("band [{:.3}, {:.3}]", band.low, band.high);

    for (loan, credit) in [(20.0, 550.0), (65.0, 550.0), (0.0, 300.0), (99.9, 849.9)] {
        let x = data.encode_row(&[RawValue::Number(loan), RawValue::Number(credit)])?;
        println!(
            "loan {loan:>5} credit {credit:>5}: log pdf {:>7.3}, violation {:.3}",
            copula.log_pdf(&x)?,
            g2_violation(&copula, &band, &x)?
        );
    }
    Ok(())
}
