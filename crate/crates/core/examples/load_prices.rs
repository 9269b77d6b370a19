//! Writes a synthetic price file with a ragged ticker, loads it back and
//! inspects the period grid, history window and covariance estimate.
//!
//! `cargo run --example load_prices`

use std::io::Write;

use factor_mcls::data::{self, PeriodGrid, ScaleMode};
use factor_mcls::synthetic::MarketSpec;

fn main() -> factor_mcls::Result<()> {
    let table = MarketSpec::djia_like(3).build();
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    // A ticker that misses half the calendar gets dropped on load.
    for d in table.dates().iter().step_by(2) {
        writeln!(csv, "{d},NEWCO,10.0")?;
    }

    let loaded = data::load_price_table(csv.as_slice(), None)?;
    let t = &loaded.table;
    println!("kept {} tickers over {} days ({} .. {})", t.num_assets(), t.num_days(), t.dates()[0], t.dates()[t.num_days() - 1]);
    for d in &loaded.dropped {
        println!("dropped {}: missing {} of {} dates", d.ticker, d.missing_dates, d.total_dates);
    }

    let first5 = loaded.table.select(&[0, 1, 2, 3, 4])?;
    let grid = PeriodGrid::fit(first5.num_days(), 5, 10, None)?;
    println!("grid: first decision day {} ({}), {} periods", grid.first_decision_index(), first5.dates()[grid.first_decision_index()], grid.num_periods());

    let h = data::history_matrix(&first5, &grid, 1)?;
    println!("history window for period 1: {} assets x {} days", h.num_assets(), h.matrix().ncols());
    let cov = data::covariance(&h, ScaleMode::Percent)?;
    let names = first5.tickers();
    print!("{:>6}", "");
    for n in names {
        print!("{n:>9}");
    }
    println!();
    for (i, row) in cov.sigma.rows().into_iter().enumerate() {
        print!("{:>6}", names[i]);
        for v in row {
            print!("{v:>9.4}");
        }
        println!();
    }
    let w = vec![0.2; 5];
    println!("equal-weight variance (percent^2): {:.5}", cov.quadratic_form(&w));
    Ok(())
}
