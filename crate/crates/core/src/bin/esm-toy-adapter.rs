//! Serves a built-in toy model over the frame protocol on stdin/stdout.
//!
//! Usage: `esm-toy-adapter [key=value ...]`, e.g.
//! `esm-toy-adapter variant=upwind case=jet nlat=64 nlon=128 cfl=0.5`.

fn main() {
    std::process::exit(esmgauntlet::toymodels::serve_main(std::env::args().skip(1)));
}
