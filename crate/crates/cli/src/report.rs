use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use vhg_core::engine::{read_ledger_csv, LedgerRow};

use crate::{Failure, ReportArgs};

#[derive(Debug, Default, Serialize)]
struct Totals {
    hours: usize,
    fc: f64,
    ec: f64,
    bc: f64,
    bd: f64,
    e_g2v: f64,
    e_g2h: f64,
    e_v2g: f64,
    e_v2h: f64,
    e_drive: f64,
    e_batt: f64,
    slack: f64,
    soc_min: f64,
    soc_max: f64,
}

/// Sums over a group of ledger hours.
#[derive(Debug, Default, Serialize)]
struct Bucket {
    key: usize,
    hours: usize,
    ec: f64,
    bc: f64,
    bd: f64,
    e_g2v: f64,
    e_g2h: f64,
    e_v2g: f64,
    e_v2h: f64,
    e_drive: f64,
    mean_price: f64,
    mean_soc: f64,
}

impl Bucket {
    fn add(&mut self, r: &LedgerRow) {
        self.hours += 1;
        self.ec += r.ec;
        self.bc += r.bc;
        self.bd += r.bd_increment;
        self.e_g2v += r.e_g2v;
        self.e_g2h += r.e_g2h;
        self.e_v2g += r.e_v2g;
        self.e_v2h += r.e_v2h;
        self.e_drive += r.e_drive;
        self.mean_price += r.price;
        self.mean_soc += r.soc;
    }

    fn finish(mut self) -> Self {
        if self.hours > 0 {
            self.mean_price /= self.hours as f64;
            self.mean_soc /= self.hours as f64;
        }
        self
    }
}

fn totals(rows: &[LedgerRow]) -> Totals {
    let mut t = Totals {
        soc_min: f64::INFINITY,
        soc_max: f64::NEG_INFINITY,
        ..Totals::default()
    };
    for r in rows {
        t.hours += 1;
        t.ec += r.ec;
        t.bc += r.bc;
        t.bd += r.bd_increment;
        t.e_g2v += r.e_g2v;
        t.e_g2h += r.e_g2h;
        t.e_v2g += r.e_v2g;
        t.e_v2h += r.e_v2h;
        t.e_drive += r.e_drive;
        t.e_batt += r.battery_throughput();
        t.slack += r.s;
        t.soc_min = t.soc_min.min(r.soc);
        t.soc_max = t.soc_max.max(r.soc);
    }
    t.fc = t.ec + t.bc;
    t
}

fn grouped(rows: &[LedgerRow], groups: usize, key: impl Fn(&LedgerRow) -> usize) -> Vec<Bucket> {
    let mut out: Vec<Bucket> = (0..groups)
        .map(|k| Bucket {
            key: k,
            ..Bucket::default()
        })
        .collect();
    for r in rows {
        out[key(r)].add(r);
    }
    out.into_iter().map(Bucket::finish).collect()
}

fn write_table(path: &Path, key_name: &str, rows: &[Bucket]) -> Result<(), Failure> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).with_context(ctx)?;
    w.write_record([
        key_name,
        "hours",
        "ec",
        "bc",
        "bd",
        "e_g2v",
        "e_g2h",
        "e_v2g",
        "e_v2h",
        "e_drive",
        "mean_price",
        "mean_soc",
    ])
    .with_context(ctx)?;
    for b in rows {
        w.write_record(
            [
                b.key as f64,
                b.hours as f64,
                b.ec,
                b.bc,
                b.bd,
                b.e_g2v,
                b.e_g2h,
                b.e_v2g,
                b.e_v2h,
                b.e_drive,
                b.mean_price,
                b.mean_soc,
            ]
            .map(|v| v.to_string()),
        )
        .with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let rows = read_ledger_csv(&args.ledger).map_err(|e| Failure::Input(e.into()))?;
    if rows.is_empty() {
        return Err(Failure::Input(anyhow::anyhow!(
            "{}: ledger has no rows",
            args.ledger.display()
        )));
    }
    let t = totals(&rows);
    let first = rows[0].hour;
    let days = (rows[rows.len() - 1].hour - first) / 24 + 1;
    let daily = grouped(&rows, days, |r| (r.hour - first) / 24);
    let hourly = grouped(&rows, 24, |r| r.hour % 24);

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_table(&args.out.join("daily.csv"), "day", &daily)?;
    write_table(&args.out.join("hour_of_day.csv"), "hour_of_day", &hourly)?;
    let path = args.out.join("report_summary.json");
    let text = serde_json::to_string_pretty(&t).context("serializing totals")?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{} h | FC {:.2} € | EC {:.2} € | BC {:.2} € | BD {:.3} % | E_batt {:.1} kWh | V2G {:.1} kWh | V2H {:.1} kWh",
        t.hours, t.fc, t.ec, t.bc, t.bd, t.e_batt, t.e_v2g, t.e_v2h
    );
    Ok(())
}
