//! Prompt fixtures for parser checks.

/// The two-object benchmark prompts with the noun each phrase ends on.
pub const CORPUS: [(&str, [&str; 2]); 30] = [
    ("a fluffy sheep and a bare goat", ["sheep", "goat"]),
    ("a friendly koala and a watchful kangaroo", ["koala", "kangaroo"]),
    ("a howling wolf and a purring cat", ["wolf", "cat"]),
    ("a white cat and a brown dog", ["cat", "dog"]),
    ("a golden retriever and a gray wolf", ["retriever", "wolf"]),
    ("a regal lion and a sly fox", ["lion", "fox"]),
    ("a striped tiger and a spotted leopard", ["tiger", "leopard"]),
    ("a wise owl and a nimble squirrel", ["owl", "squirrel"]),
    ("a wild mustang and a graceful deer", ["mustang", "deer"]),
    ("a robust bison and a dainty gazelle", ["bison", "gazelle"]),
    ("a soft bunny and a spiky porcupine", ["bunny", "porcupine"]),
    ("a swift cheetah and a lumbering bear", ["cheetah", "bear"]),
    ("a cunning coyote and a timid deer", ["coyote", "deer"]),
    ("a towering giraffe and a sturdy elephant", ["giraffe", "elephant"]),
    ("a sprightly hare and a slow-moving tortoise", ["hare", "tortoise"]),
    ("a spotted hyena and a striped zebra", ["hyena", "zebra"]),
    ("a fierce falcon and a gentle dove", ["falcon", "dove"]),
    ("a swift hummingbird and a perching eagle", ["hummingbird", "eagle"]),
    ("a vibrant toucan and a modest pigeon", ["toucan", "pigeon"]),
    ("a chatty parrot and a silent owl", ["parrot", "owl"]),
    ("a luminescent jellyfish and a matte sea turtle", ["jellyfish", "turtle"]),
    ("a fierce crocodile and a docile manatee", ["crocodile", "manatee"]),
    ("a beautiful butterfly and a fluffy bee", ["butterfly", "bee"]),
    ("a hovering dragonfly and a perched hummingbird", ["dragonfly", "hummingbird"]),
    ("a wispy dandelion and a dense sunflower", ["dandelion", "sunflower"]),
    ("a red apple and a green pear", ["apple", "pear"]),
    ("a ripe peach and a tangy orange", ["peach", "orange"]),
    ("a succulent pineapple and a crisp apple", ["pineapple", "apple"]),
    ("a rusty robot and a delicate Muppet", ["robot", "muppet"]),
    ("a futuristic drone and a traditional kite", ["drone", "kite"]),
];

/// Prompts with spatial phrases, paired with the nouns that must survive.
pub const LOCATION_FIXTURES: [(&str, &[&str]); 10] = [
    ("a cat at the top", &["cat"]),
    ("a dog on the left", &["dog"]),
    ("a red car in the center", &["car"]),
    ("a sheep at the bottom and a goat on the right", &["sheep", "goat"]),
    ("a bird near the edge", &["bird"]),
    ("a lamp in the corner of the room", &["lamp", "room"]),
    ("a tree in the middle and a house towards the rear", &["tree", "house"]),
    ("a white horse in the vicinity of a barn", &["horse", "barn"]),
    ("a boat on the north", &["boat"]),
    ("a kite in the proximity of the periphery", &["kite"]),
];
