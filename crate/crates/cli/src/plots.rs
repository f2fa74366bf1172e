//! gnuplot scripts for the CSV outputs. Column names follow the CSV headers.

pub fn scan_script(csv: &str, title: &str) -> String {
    format!(
        r#"set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set terminal pngcairo size 900,900
set output '{csv}.png'
set multiplot layout 3,1 title '{title}'
set ylabel 'force [N]'
plot '{csv}' using 't':'f_tissue' with lines title 'tissue', \
     '' using 't':'f_desired' with lines title 'desired', \
     '' using 't':'f_ceiling' with lines dt 2 title 'ceiling'
set ylabel 'stiffness [N/m]'
plot '{csv}' using 't':'kz' with lines title 'K_z'
set ylabel 'tank energy [J]'
set xlabel 't [s]'
plot '{csv}' using 't':'tank_energy' with lines title 'T'
unset multiplot
"#
    )
}

pub fn map_script(csv: &str) -> String {
    format!(
        r#"set datafile separator ','
set terminal pngcairo size 1200,500
set output '{csv}.png'
set view map
set size ratio -1
set xlabel 'x [m]'
set ylabel 'y [m]'
set multiplot layout 1,2
set title 'elasticity [N/m^beta]'
splot '{csv}' using 'x':'y':'kappa' with image notitle
set title 'viscosity [Ns/m^(beta+1)]'
splot '{csv}' using 'x':'y':'lambda' with image notitle
unset multiplot
"#
    )
}

pub fn compare_script(runs: &[(String, String)]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset datafile commentschars '#'\nset terminal pngcairo size 1000,700\n\
         set xlabel 't [s]'\nset ylabel 'force [N]'\n",
    );
    for disturb in ["none", "lift"] {
        let sel: Vec<&(String, String)> = runs.iter().filter(|(_, d)| d == disturb).collect();
        if sel.is_empty() {
            continue;
        }
        s.push_str(&format!("set output 'compare-{disturb}.png'\nset title 'disturbance: {disturb}'\nplot "));
        let curves: Vec<String> = sel
            .iter()
            .map(|(mode, d)| format!("'runs/{mode}-{d}.csv' using 't':'f_tissue' with lines title '{mode}'"))
            .collect();
        s.push_str(&curves.join(", \\\n     "));
        s.push('\n');
    }
    s
}
