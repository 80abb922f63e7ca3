//! Prints one PASS/FAIL line per acceptance criterion; exits with the number
//! of failures.

fn main() {
    let verdicts = ouu_cli::acceptance::run_all(|v| println!("{v}"));
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("{} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    std::process::exit(failed as i32);
}
