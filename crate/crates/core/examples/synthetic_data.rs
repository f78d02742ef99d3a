//! Generates a synthetic regression set, masks labels and shows the partition.

use duallabel::datahub::{
    gen_synthetic_regression, mask_labels, partition, train_val_test_split, write_csv, MinMaxScaler,
};

fn main() -> duallabel::Result<()> {
    let data = gen_synthetic_regression(1000, 10, 42)?;
    let s = &data.samples[0];
    println!(
        "first sample: y1 = {:.4}, y2 = {:.4}, truth y2 = {:.4}",
        s.y1.unwrap(),
        s.y2.unwrap(),
        data.truth.y2(&s.x)
    );

    let (train, val, test) = train_val_test_split(&data.samples, 7);
    println!("split: {} train / {} val / {} test", train.len(), val.len(), test.len());

    let scaler = MinMaxScaler::fit(&train);
    let train = mask_labels(&scaler.transform(&train), 0.3, 0.3, 8)?;
    let parts = partition(&train);
    println!(
        "train partition: {} full, {} only y1, {} only y2, {} unlabeled",
        parts.labeled.len(),
        parts.only_y1.len(),
        parts.only_y2.len(),
        parts.unlabeled.len()
    );

    let path = std::env::temp_dir().join("duallabel-synthetic.csv");
    write_csv(&path, &train)?;
    println!("wrote {}", path.display());
    Ok(())
}
