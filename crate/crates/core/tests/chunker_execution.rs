//! Compiles instrumented sources with the system C compiler and checks the
//! emitted log stream. Skipped when no `cc` is available.

use std::process::Command;

use resid_core::chunker::{identify_chunks, instrument, SourceFile};

const LOOP_SRC: &str = "\
int main() {
    int i = 0;
    while (i < 3) {
        i = i + 1;
    }
    return 0;
}
";

const IF_SRC: &str = "\
int main() {
    int x = 2;
    int y = 0;
    if (x > 1) {
        y = 1;
    } else {
        y = 2;
    }
    return y - 1;
}
";

fn run_instrumented(name: &str, src: &str) -> Option<Vec<String>> {
    let srcs = [SourceFile::new(format!("{name}.c"), src)];
    let db = identify_chunks(&srcs).unwrap();
    let out = instrument(&srcs, &db).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let c_path = dir.path().join(format!("{name}.c"));
    let exe = dir.path().join(name);
    let prelude = "#include <stdio.h>\n#define RESID_LOG(id) printf(\"%s\\n\", id)\n";
    std::fs::write(&c_path, format!("{prelude}{}", out[0].text)).unwrap();
    let status = Command::new("cc")
        .arg(&c_path)
        .arg("-o")
        .arg(&exe)
        .status()
        .ok()?;
    assert!(status.success(), "instrumented source failed to compile");
    let run = Command::new(&exe).output().unwrap();
    Some(
        String::from_utf8(run.stdout)
            .unwrap()
            .lines()
            .map(|l| l.rsplit(':').next().unwrap().to_string())
            .collect(),
    )
}

#[test]
fn loop_program_logs_body_per_iteration() {
    let Some(log) = run_instrumented("loop", LOOP_SRC) else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert_eq!(log.join(","), "1,2,2,2,3");
}

#[test]
fn if_program_logs_taken_branch() {
    let Some(log) = run_instrumented("fig1", IF_SRC) else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert_eq!(log.join(","), "1,2,4");
}
