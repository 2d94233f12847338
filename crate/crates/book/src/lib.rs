//! Compiles and runs the code blocks of the guide in `book/src` as doc-tests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(measures, "measures.md");
chapter!(kernels, "kernels.md");
chapter!(derivatives, "derivatives.md");
chapter!(calculus, "calculus.md");
chapter!(ergodicity, "ergodicity.md");
chapter!(feynman_kac, "feynman_kac.md");
chapter!(samplers, "samplers.md");
chapter!(cli, "cli.md");
