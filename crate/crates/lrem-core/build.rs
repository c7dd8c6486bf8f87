fn main() {
    // Dense/banded LAPACK routines (zhegv, zgbtrf/zgbtrs) and dgemm come from
    // the system OpenBLAS, which bundles LAPACK on all common distributions.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
