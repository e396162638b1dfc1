fn main() {
    std::process::exit(mrlab::experiment::main_entry());
}
