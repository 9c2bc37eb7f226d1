//! Plain gnuplot scripts, run from the directory they are written to.

const PREAMBLE: &str = "set datafile separator ','\nset terminal pngcairo size 900,560\nset key top left\nset grid\n";

pub fn kcurves(cells: &[&str]) -> String {
    let mut s = String::from(PREAMBLE);
    s.push_str("set xlabel 'window'\nset ylabel 'iterations'\n");
    for c in cells {
        s.push_str(&format!(
            "set output '{c}/kcurves.png'\nset title '{c}'\n\
             plot '{c}/windows.csv' using 1:2 with steps lw 2 title 'k_obs', \\\n     \
             '' using 1:3 with steps lw 2 dt 2 title 'k_pred'\n"
        ));
    }
    s
}

pub fn efficiency() -> String {
    let mut s = String::from(PREAMBLE);
    // summary.csv: 2 sweep, 4 gamma_tilde, 5 N, 6 fine_log2, 7 mode, 8 E_obs, 10 E0_th.
    for (sweep, col, xlabel, logx) in [
        ("gamma_tilde", 4, "gamma tilde", true),
        ("N", 5, "N", true),
        ("fine_log2", 6, "log2(dT/dt)", false),
    ] {
        s.push_str(&format!("set output 'efficiency_{sweep}.png'\nset xlabel '{xlabel}'\nset ylabel 'efficiency'\n"));
        s.push_str(if logx { "set logscale x\n" } else { "unset logscale x\n" });
        let pick = |mode: &str, y: usize| {
            format!("'summary.csv' using (strcol(2) eq '{sweep}' && strcol(7) eq '{mode}' ? ${col} : NaN):{y}")
        };
        s.push_str(&format!(
            "plot {} with linespoints title 'E(k_obs)', \\\n     {} with linespoints title 'E(k_th)', \\\n     {} with linespoints dt 2 title 'E0_th'\n",
            pick("k_obs", 8),
            pick("k_th", 8),
            pick("k_th", 10)
        ));
    }
    s
}

pub fn vw_compare() -> String {
    let mut s = String::from(PREAMBLE);
    s.push_str(
        "set output 'vw_cumulative.png'\nset xlabel 't'\nset ylabel 'cumulative iterations'\n\
         plot 'vw_cumulative.csv' using 1:2 with steps lw 2 title 'variable windows', \\\n     \
         '' using 1:3 with steps lw 2 dt 2 title 'fixed windows (k_th)'\n\
         set output 'vw_schedule.png'\nset xlabel 'window'\nset ylabel 'subintervals'\n\
         plot 'vw_schedule.csv' using 1:2 with linespoints title 'N_l'\n\
         set output 'vw_dt_sweep.png'\nset xlabel 'log2(dT/dt)'\nset ylabel 'efficiency'\n\
         plot 'vw_dt_sweep.csv' using 1:7 with linespoints title 'E0', '' using 1:8 with linespoints title 'E (timed)'\n",
    );
    s
}
