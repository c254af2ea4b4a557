#ifndef SCOREGEN_LABELS_HPP
#define SCOREGEN_LABELS_HPP

#include <string>
#include <utility>
#include <vector>

namespace scoregen {

/// The eight merged genre classes, lexicographically sorted. This order is
/// load-bearing: it fixes tag_genre token ids and tagger head indices.
inline const std::vector<std::string>& default_genre_classes() {
    static const std::vector<std::string> v = {
        "classical & traditional",
        "electronic & dance",
        "folk & country",
        "jazz & blues",
        "rock & metal",
        "soundtrack & stage",
        "urban",
        "world",
    };
    return v;
}

/// Complexity level names indexed by the Complexity enum value.
inline const std::vector<std::string>& complexity_names() {
    static const std::vector<std::string> v = {"beginner", "intermediate", "advanced"};
    return v;
}

/// Default retained composer vocabulary (47 canonical lowercase names,
/// sorted). Stand-in for a corpus-count-thresholded list; override via the
/// composer table JSON when working from a real corpus.
inline const std::vector<std::string>& default_composers() {
    static const std::vector<std::string> v = {
        "antonin dvorak",
        "antonio vivaldi",
        "aram khachaturian",
        "astor piazzolla",
        "camille saint-saens",
        "carl czerny",
        "claude debussy",
        "dmitri shostakovich",
        "edvard grieg",
        "erik satie",
        "felix mendelssohn",
        "francisco tarrega",
        "franz liszt",
        "franz schubert",
        "frederic chopin",
        "gabriel faure",
        "george frideric handel",
        "george gershwin",
        "giuseppe verdi",
        "gustav holst",
        "hans zimmer",
        "igor stravinsky",
        "isaac albeniz",
        "joe hisaishi",
        "johann pachelbel",
        "johann sebastian bach",
        "johann strauss ii",
        "johannes brahms",
        "john philip sousa",
        "john williams",
        "koji kondo",
        "leonard cohen",
        "ludovico einaudi",
        "ludwig van beethoven",
        "maurice ravel",
        "modest mussorgsky",
        "niccolo paganini",
        "nikolai rimsky-korsakov",
        "pyotr ilyich tchaikovsky",
        "richard wagner",
        "robert schumann",
        "scott joplin",
        "sergei prokofiev",
        "sergei rachmaninoff",
        "the beatles",
        "wolfgang amadeus mozart",
        "yann tiersen",
    };
    return v;
}

/// Raw genre tag -> merged class. Raw tags not in this table are dropped
/// (notably "darkwave" and "experimental", which are excluded on purpose).
inline const std::vector<std::pair<std::string, std::string>>& default_genre_merge() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"classical", "classical & traditional"},
        {"religious", "classical & traditional"},
        {"new age", "classical & traditional"},
        {"traditional", "classical & traditional"},
        {"soundtrack", "soundtrack & stage"},
        {"comedy", "soundtrack & stage"},
        {"stage", "soundtrack & stage"},
        {"pop", "rock & metal"},
        {"rock", "rock & metal"},
        {"metal", "rock & metal"},
        {"punk", "rock & metal"},
        {"folk", "folk & country"},
        {"country", "folk & country"},
        {"hip hop", "urban"},
        {"r&b", "urban"},
        {"funk&soul", "urban"},
        {"rap", "urban"},
        {"electronic", "electronic & dance"},
        {"dance", "electronic & dance"},
        {"disco", "electronic & dance"},
        {"house", "electronic & dance"},
        {"techno", "electronic & dance"},
        {"world music", "world"},
        {"world", "world"},
        {"reggae&ska", "world"},
        {"latin", "world"},
        {"jazz", "jazz & blues"},
        {"blues", "jazz & blues"},
        {"swing", "jazz & blues"},
    };
    return v;
}

/// Alias -> canonical composer name. Keys and values are lowercase; keys are
/// matched after case/whitespace folding.
inline const std::vector<std::pair<std::string, std::string>>& default_composer_aliases() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"mozart", "wolfgang amadeus mozart"},
        {"w.a. mozart", "wolfgang amadeus mozart"},
        {"w. a. mozart", "wolfgang amadeus mozart"},
        {"wa mozart", "wolfgang amadeus mozart"},
        {"amadeus mozart", "wolfgang amadeus mozart"},
        {"beethoven", "ludwig van beethoven"},
        {"l.v. beethoven", "ludwig van beethoven"},
        {"l. van beethoven", "ludwig van beethoven"},
        {"ludwig v. beethoven", "ludwig van beethoven"},
        {"bach", "johann sebastian bach"},
        {"j.s. bach", "johann sebastian bach"},
        {"j. s. bach", "johann sebastian bach"},
        {"js bach", "johann sebastian bach"},
        {"sebastian bach", "johann sebastian bach"},
        {"chopin", "frederic chopin"},
        {"f. chopin", "frederic chopin"},
        {"fryderyk chopin", "frederic chopin"},
        {"frederic francois chopin", "frederic chopin"},
        {"tchaikovsky", "pyotr ilyich tchaikovsky"},
        {"p.i. tchaikovsky", "pyotr ilyich tchaikovsky"},
        {"pyotr tchaikovsky", "pyotr ilyich tchaikovsky"},
        {"peter ilyich tchaikovsky", "pyotr ilyich tchaikovsky"},
        {"tschaikowsky", "pyotr ilyich tchaikovsky"},
        {"liszt", "franz liszt"},
        {"f. liszt", "franz liszt"},
        {"schubert", "franz schubert"},
        {"f. schubert", "franz schubert"},
        {"brahms", "johannes brahms"},
        {"j. brahms", "johannes brahms"},
        {"debussy", "claude debussy"},
        {"c. debussy", "claude debussy"},
        {"handel", "george frideric handel"},
        {"haendel", "george frideric handel"},
        {"g.f. handel", "george frideric handel"},
        {"georg friedrich handel", "george frideric handel"},
        {"vivaldi", "antonio vivaldi"},
        {"a. vivaldi", "antonio vivaldi"},
        {"dvorak", "antonin dvorak"},
        {"a. dvorak", "antonin dvorak"},
        {"grieg", "edvard grieg"},
        {"e. grieg", "edvard grieg"},
        {"satie", "erik satie"},
        {"mendelssohn", "felix mendelssohn"},
        {"felix mendelssohn bartholdy", "felix mendelssohn"},
        {"ravel", "maurice ravel"},
        {"m. ravel", "maurice ravel"},
        {"schumann", "robert schumann"},
        {"r. schumann", "robert schumann"},
        {"wagner", "richard wagner"},
        {"r. wagner", "richard wagner"},
        {"verdi", "giuseppe verdi"},
        {"g. verdi", "giuseppe verdi"},
        {"pachelbel", "johann pachelbel"},
        {"rachmaninoff", "sergei rachmaninoff"},
        {"rachmaninov", "sergei rachmaninoff"},
        {"sergei rachmaninov", "sergei rachmaninoff"},
        {"prokofiev", "sergei prokofiev"},
        {"shostakovich", "dmitri shostakovich"},
        {"stravinsky", "igor stravinsky"},
        {"mussorgsky", "modest mussorgsky"},
        {"rimsky-korsakov", "nikolai rimsky-korsakov"},
        {"saint-saens", "camille saint-saens"},
        {"camille saint saens", "camille saint-saens"},
        {"faure", "gabriel faure"},
        {"gershwin", "george gershwin"},
        {"joplin", "scott joplin"},
        {"sousa", "john philip sousa"},
        {"holst", "gustav holst"},
        {"paganini", "niccolo paganini"},
        {"czerny", "carl czerny"},
        {"albeniz", "isaac albeniz"},
        {"tarrega", "francisco tarrega"},
        {"piazzolla", "astor piazzolla"},
        {"khachaturian", "aram khachaturian"},
        {"strauss ii", "johann strauss ii"},
        {"johann strauss", "johann strauss ii"},
        {"hisaishi", "joe hisaishi"},
        {"kondo", "koji kondo"},
        {"einaudi", "ludovico einaudi"},
        {"tiersen", "yann tiersen"},
        {"zimmer", "hans zimmer"},
        {"williams", "john williams"},
        {"beatles", "the beatles"},
        {"cohen", "leonard cohen"},
    };
    return v;
}

}  // namespace scoregen

#endif  // SCOREGEN_LABELS_HPP
