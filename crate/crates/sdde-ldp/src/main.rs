fn main() {
    std::process::exit(sdde_ldp::cli::main_entry());
}
