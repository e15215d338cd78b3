fn main() {
    println!("diffplan: command-line interface under construction");
}
