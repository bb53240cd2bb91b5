use ctt_core::bench::{
    read_bench_csv, run_replications, write_bench_csv, BenchRow, ScenarioSpec, TestKind, TestSpec,
};
use ctt_core::par::with_threads;
use ctt_core::sample::{read_csv_path, write_csv};
use ctt_core::RngStream;

fn spec(kind: TestKind) -> TestSpec {
    let mut s = TestSpec::new(kind);
    s.s = 8;
    s.g = 1;
    s.r = 32;
    s.block_size = Some(16);
    s.ell = Some(512);
    if kind == TestKind::Actt {
        s.b = 49;
        s.b2 = 20;
        s.b3 = 6;
    }
    s
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let sc = ScenarioSpec::parse("gauss:d=3,shift=0.3", 256).unwrap();
    let (x, y) = sc.generator.generate(sc.n, &mut RngStream::new(5)).unwrap();
    for kind in TestKind::ALL {
        let t = spec(kind);
        let run = |threads| {
            with_threads(threads, || t.run(x.view(), y.view(), &RngStream::new(17)).unwrap())
        };
        let (a, b, c) = (run(1), run(4), run(1));
        for other in [&b, &c] {
            assert_eq!(a.statistic.to_bits(), other.statistic.to_bits(), "{kind}");
            assert_eq!(a.permuted, other.permuted, "{kind}");
            assert_eq!((a.rank, a.reject), (other.rank, other.reject), "{kind}");
        }
    }
}

#[test]
fn replications_are_a_function_of_the_seed() {
    let sc = ScenarioSpec::parse("blobs:eps=2", 64).unwrap();
    let mut t = spec(TestKind::Ctt);
    t.s = 8;
    t.g = 0;
    let a = run_replications(&t, &sc, 30, 99, 1).unwrap();
    let b = run_replications(&t, &sc, 30, 99, 3).unwrap();
    assert_eq!((a.rejections, a.rate, a.wilson_lo), (b.rejections, b.rate, b.wilson_lo));
}

#[test]
fn bench_csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let sc = ScenarioSpec::parse("gauss:d=2,shift=0.2", 64).unwrap();
    let mut rows = Vec::new();
    for kind in [TestKind::Ctt, TestKind::Quadratic, TestKind::AsympBlockI] {
        let t = spec(kind);
        let summary = run_replications(&t, &sc, 5, 1, 0).unwrap();
        rows.push(BenchRow::new(&t, &sc, &summary));
    }
    write_bench_csv(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    let back = read_bench_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, rows);
    for (r, b) in rows.iter().zip(&back) {
        assert_eq!(r.summary(), b.summary());
    }
}

#[test]
fn sample_csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let sc = ScenarioSpec::parse("gauss:d=4,shift=0", 50).unwrap();
    let (x, _) = sc.generator.generate(sc.n, &mut RngStream::new(1)).unwrap();
    write_csv(std::fs::File::create(&path).unwrap(), x.view()).unwrap();
    assert_eq!(read_csv_path(&path, false).unwrap(), x);
}
