//! Writes the bundled synthetic datasets into `data/`.

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir).expect("create data directory");
    for (name, contents) in sqzlab::cli::bundled_datasets().expect("generate datasets") {
        std::fs::write(dir.join(name), contents).expect("write dataset");
        println!("wrote data/{name}");
    }
}
