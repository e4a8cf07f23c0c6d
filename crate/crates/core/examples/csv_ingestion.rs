//! Ingests a messy long-format CSV: a missing hour, a repeated hour, a zero
//! reading and a Saturday start.

use es_adrnn::data::read_csv;

const RAW: &str = "timestamp,series_id,load_mw
2018-01-06T00:00:00Z,PL,900
2018-01-06T01:00:00Z,PL,910
2018-01-07T23:00:00Z,PL,950
2018-01-08T00:00:00Z,PL,1000
2018-01-08T01:00:00Z,PL,1010
2018-01-08T03:00:00Z,PL,1030
2018-01-08T04:00:00Z,PL,0
2018-01-08T05:00:00Z,PL,1050
2018-01-08T05:00:00Z,PL,1070
2018-01-08T06:00:00Z,PL,1070
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match read_csv(RAW.as_bytes()) {
        Ok(_) => unreachable!("the 45 h weekend gap is rejected"),
        Err(e) => println!("rejected: {e}"),
    }
    let repaired: String = RAW.lines().filter(|l| !l.starts_with("2018-01-06")).map(|l| format!("{l}\n")).collect();
    for s in read_csv(repaired.as_bytes())? {
        println!("{} starts {} with {} hours:", s.id, s.start, s.len());
        for (i, v) in s.values.iter().enumerate() {
            println!("  {} {v}", s.timestamp(i).format("%a %H:%M"));
        }
    }
    Ok(())
}
